#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "popmir/audio.h"
#include "popmir/matrix.h"

namespace popmir {

inline constexpr double kBofWindowSeconds = 0.025;
inline constexpr double kBofHopSeconds = 0.01;
inline constexpr int kBofBands = 36;
inline constexpr int kBofCoeffs = 20;
inline constexpr int kCodebookSize = 32;

/// Hamming-windowed 25 ms frames every 10 ms; 36 mel bands; first 20
/// cepstral coefficients. One row per frame.
Matrix extract_mfcc_frames(const AudioClip& clip);

struct BofCodebook {
  Matrix centroids;  // k x dim
  std::uint64_t seed = 0;
  int iterations = 0;
  bool converged = false;
  double inertia = 0.0;                 // sum of squared distances at the final assignment
  std::vector<double> inertia_history;  // one entry per assignment pass

  std::size_t k() const { return centroids.rows(); }
};

/// k-means with k-means++ seeding drawn from `seed`, Lloyd iterations until
/// the assignment stops changing or `max_iterations` updates. An emptied
/// cluster is moved onto the point farthest from its current centroid.
/// Throws ValidationError if the data has fewer than k distinct rows.
BofCodebook fit_codebook(const Matrix& frames, int k, std::uint64_t seed, int max_iterations = 300);

/// Index of the closest centroid (squared Euclidean), lowest index on ties.
std::size_t nearest_centroid(std::span<const double> x, const Matrix& centroids);

/// Normalised histogram of nearest-centroid assignments.
std::vector<double> bof_features(const Matrix& frames, const BofCodebook& codebook);

/// Every `stride`-th row starting at row 0; stride 1 returns a copy.
Matrix subsample_rows(const Matrix& m, std::size_t stride);

nlohmann::json codebook_to_json(const BofCodebook& cb);
BofCodebook codebook_from_json(const nlohmann::json& j);

}  // namespace popmir

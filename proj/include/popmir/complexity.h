#pragma once

#include <array>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "popmir/audio.h"

namespace popmir {

// Segmentation shared by the rhythm, timbre and arousal components: a
// 256 x 512-sample segment (about 2.97 s at 44.1 kHz) advanced by one second.
inline constexpr std::size_t kSegmentFrames = 256;
inline constexpr std::size_t kSegmentFrameSamples = 512;
inline constexpr std::size_t kSegmentSamples = kSegmentFrames * kSegmentFrameSamples;
inline constexpr double kSegmentHopSeconds = 1.0;
inline constexpr double kChromaSegmentSeconds = 0.25;

inline constexpr int kRhythmBands = 12;
inline constexpr int kRhythmModulationBins = 30;
inline constexpr int kTimbreBands = 36;

/// Jensen-Shannon divergence with base-2 logs, so the result lies in [0, 1].
/// Inputs must be non-negative and sum to 1 within 1e-9.
double jsd(std::span<const double> p, std::span<const double> q);

enum class ComponentKind { Chroma, Rhythm, Timbre };

std::string_view component_name(ComponentKind kind);

/// One vector per segment, all of the same dimension.
struct ComponentSequence {
  ComponentKind kind = ComponentKind::Chroma;
  double segment_seconds = 0.0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> vectors;

  std::size_t size() const { return vectors.size(); }
};

/// 12-bin pitch-class distribution per non-overlapping 0.25 s segment
/// (index 0 = C, 9 = A). Silent segments map to the uniform distribution.
ComponentSequence chroma_sequence(const AudioClip& clip);

/// 12 mel bands x 30 modulation bins per segment, flattened band-major.
ComponentSequence rhythm_sequence(const AudioClip& clip);

/// Mean 36-coefficient MFCC over the 256 frames of each Hamming-windowed segment.
ComponentSequence timbre_sequence(const AudioClip& clip);

/// Maps a window sum to a probability distribution: vectors with a negative
/// entry are shifted by (-min + 1e-9) first; all-zero sums become uniform.
std::vector<double> to_distribution(std::span<const double> v);

/// Observation window of 2^(j-1) segments.
constexpr std::size_t window_segments(int j) { return std::size_t{1} << (j - 1); }

struct StructuralChangeResult {
  std::map<int, double> mean_sc;  // j -> mean SC over valid positions
  std::vector<int> missing;        // j values the sequence was too short for
};

/// Mean Jensen-Shannon divergence between the normalised sums of the w_j
/// segments before and after each position i (w_j <= i <= n - w_j).
StructuralChangeResult structural_change(const ComponentSequence& seq, std::span<const int> j_values);

/// Per-position SC values for one window size; empty when the sequence is too short.
std::vector<double> structural_change_series(const ComponentSequence& seq, int j);

/// Short-time magnitude sum(|w[n] x[n]|) per segment, summarised by its
/// mean and population standard deviation.
std::pair<double, double> arousal(const AudioClip& clip);

inline constexpr std::array<int, 6> kChromaScales{3, 4, 5, 6, 7, 8};
inline constexpr std::array<int, 6> kRhythmTimbreScales{1, 2, 3, 4, 5, 6};
inline constexpr std::size_t kComplexityDim = 20;

/// ChromaSC1..6, RhythmSC1..6, TimbreSC1..6, ArousalMean, ArousalStd.
const std::array<std::string, kComplexityDim>& complexity_feature_names();

struct ComplexityFeatureVector {
  std::array<double, kComplexityDim> values{};
};

/// Minimum clip length (seconds, 44.1 kHz) for the full 20-feature vector.
double complexity_min_seconds();

/// Throws ValidationError listing every missing window scale when the clip
/// is too short. Clips at other rates are resampled to 44.1 kHz first.
ComplexityFeatureVector complexity_vector(const AudioClip& clip);

}  // namespace popmir

#include "popmir/bof.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "popmir/dsp.h"
#include "popmir/error.h"

namespace popmir {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// Uniform double in [0, 1) from the top 53 bits; independent of the
// standard library's distribution implementation.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

bool has_k_distinct_rows(const Matrix& m, std::size_t k) {
  std::vector<std::size_t> distinct;
  for (std::size_t r = 0; r < m.rows() && distinct.size() < k; ++r) {
    const auto row = m.row(r);
    const bool seen = std::any_of(distinct.begin(), distinct.end(), [&](std::size_t d) {
      const auto other = m.row(d);
      return std::equal(row.begin(), row.end(), other.begin());
    });
    if (!seen) distinct.push_back(r);
  }
  return distinct.size() >= k;
}

Matrix kmeans_plus_plus(const Matrix& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows();
  Matrix centers(0, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  std::size_t pick = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n));
  for (std::size_t c = 0; c < k; ++c) {
    centers.push_row(x.row(pick));
    const auto center = centers.row(c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x.row(i), center));
      total += d2[i];
    }
    if (c + 1 == k) break;
    // D^2 sampling; a zero total cannot happen with >= k distinct rows.
    const double target = unit_uniform(rng) * total;
    double run = 0.0;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      run += d2[i];
      if (run > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    while (d2[pick] == 0.0 && pick > 0) --pick;
  }
  return centers;
}

double assign(const Matrix& x, const Matrix& centers, std::vector<std::size_t>& labels, std::vector<double>& dist,
              bool& changed) {
  changed = false;
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    std::size_t best = 0;
    double best_d = sq_dist(row, centers.row(0));
    for (std::size_t c = 1; c < centers.rows(); ++c) {
      const double d = sq_dist(row, centers.row(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (labels[i] != best) changed = true;
    labels[i] = best;
    dist[i] = best_d;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace

Matrix extract_mfcc_frames(const AudioClip& input) {
  AudioClip storage;
  const AudioClip* clip = &input;
  if (input.sample_rate != kCanonicalRate) {
    storage = resample_to(input, kCanonicalRate);
    clip = &storage;
  }
  const auto layout = frame_layout(clip->samples.size(), clip->sample_rate, kBofWindowSeconds, kBofHopSeconds);

  RealFft fft(layout.length);
  const MelFilterbank bank(layout.length, clip->sample_rate, kBofBands);
  const Mfcc dct(kBofBands, kBofCoeffs);
  const auto window = hamming_coefficients(layout.length);

  Matrix out(layout.count(), kBofCoeffs);
  std::vector<double> frame(layout.length);
  std::vector<double> mag(fft.bins());
  std::vector<double> bands(kBofBands);
  for (std::size_t f = 0; f < layout.count(); ++f) {
    const std::size_t start = layout.starts[f];
    for (std::size_t i = 0; i < layout.length; ++i) frame[i] = clip->samples[start + i] * window[i];
    fft.magnitude(frame, mag);
    bank.apply(mag, bands);
    dct.compute(bands, out.row(f));
  }
  return out;
}

BofCodebook fit_codebook(const Matrix& frames, int k, std::uint64_t seed, int max_iterations) {
  if (k < 1) throw ValidationError("codebook size must be >= 1");
  if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
  const auto kk = static_cast<std::size_t>(k);
  if (frames.rows() < kk || !has_k_distinct_rows(frames, kk)) {
    throw ValidationError("k-means needs at least " + std::to_string(k) + " distinct vectors");
  }
  for (double v : frames.data()) {
    if (!std::isfinite(v)) throw ValidationError("k-means input contains non-finite values");
  }

  std::mt19937_64 rng(seed);
  BofCodebook cb;
  cb.seed = seed;
  cb.centroids = kmeans_plus_plus(frames, kk, rng);

  const std::size_t n = frames.rows();
  const std::size_t dim = frames.cols();
  std::vector<std::size_t> labels(n, kk);
  std::vector<double> dist(n, 0.0);
  bool changed = false;
  cb.inertia = assign(frames, cb.centroids, labels, dist, changed);
  cb.inertia_history.push_back(cb.inertia);

  Matrix sums(kk, dim);
  std::vector<std::size_t> counts(kk);
  for (int it = 0; it < max_iterations; ++it) {
    std::fill(sums.data().begin(), sums.data().end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(labels[i]);
      const auto row = frames.row(i);
      for (std::size_t d = 0; d < dim; ++d) s[d] += row[d];
      ++counts[labels[i]];
    }
    bool reseeded = false;
    for (std::size_t c = 0; c < kk; ++c) {
      auto centre = cb.centroids.row(c);
      if (counts[c] > 0) {
        const auto s = sums.row(c);
        for (std::size_t d = 0; d < dim; ++d) centre[d] = s[d] / static_cast<double>(counts[c]);
        continue;
      }
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      const auto src = frames.row(far);
      std::copy(src.begin(), src.end(), centre.begin());
      dist[far] = 0.0;
      reseeded = true;
    }
    ++cb.iterations;
    cb.inertia = assign(frames, cb.centroids, labels, dist, changed);
    cb.inertia_history.push_back(cb.inertia);
    if (!changed && !reseeded) {
      cb.converged = true;
      break;
    }
  }
  return cb;
}

std::size_t nearest_centroid(std::span<const double> x, const Matrix& centroids) {
  if (centroids.empty()) throw ValidationError("empty codebook");
  if (x.size() != centroids.cols()) throw ValidationError("vector dimension does not match codebook");
  std::size_t best = 0;
  double best_d = sq_dist(x, centroids.row(0));
  for (std::size_t c = 1; c < centroids.rows(); ++c) {
    const double d = sq_dist(x, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<double> bof_features(const Matrix& frames, const BofCodebook& codebook) {
  if (frames.rows() == 0) throw ValidationError("bag of frames needs at least one frame");
  std::vector<std::size_t> counts(codebook.k(), 0);
  for (std::size_t r = 0; r < frames.rows(); ++r) ++counts[nearest_centroid(frames.row(r), codebook.centroids)];
  std::vector<double> freq(codebook.k());
  for (std::size_t c = 0; c < freq.size(); ++c) freq[c] = static_cast<double>(counts[c]) / frames.rows();
  return freq;
}

Matrix subsample_rows(const Matrix& m, std::size_t stride) {
  if (stride == 0) throw ValidationError("subsample stride must be >= 1");
  Matrix out;
  for (std::size_t r = 0; r < m.rows(); r += stride) out.push_row(m.row(r));
  return out;
}

nlohmann::json codebook_to_json(const BofCodebook& cb) {
  nlohmann::json centroids = nlohmann::json::array();
  for (std::size_t c = 0; c < cb.k(); ++c) {
    const auto row = cb.centroids.row(c);
    centroids.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"k", cb.k()},
          {"dim", cb.centroids.cols()},
          {"seed", cb.seed},
          {"iterations", cb.iterations},
          {"converged", cb.converged},
          {"inertia", cb.inertia},
          {"centroids", std::move(centroids)}};
}

BofCodebook codebook_from_json(const nlohmann::json& j) {
  try {
    BofCodebook cb;
    cb.seed = j.at("seed").get<std::uint64_t>();
    cb.iterations = j.at("iterations").get<int>();
    cb.converged = j.value("converged", false);
    cb.inertia = j.at("inertia").get<double>();
    for (const auto& row : j.at("centroids")) cb.centroids.push_row(row.get<std::vector<double>>());
    if (cb.centroids.empty()) throw ValidationError("codebook has no centroids");
    return cb;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad codebook json: ") + e.what());
  }
}

}  // namespace popmir

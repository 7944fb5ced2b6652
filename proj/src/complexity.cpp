#include "popmir/complexity.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "popmir/dsp.h"
#include "popmir/error.h"

namespace popmir {

namespace {

constexpr double kChromaLowHz = 55.0;
constexpr double kChromaHighHz = 4186.0;
constexpr double kDistributionTolerance = 1e-9;
constexpr double kShiftEpsilon = 1e-9;

double segment_window_seconds() { return static_cast<double>(kSegmentSamples) / kCanonicalRate; }

const AudioClip& canonical(const AudioClip& clip, AudioClip& storage) {
  if (clip.sample_rate == kCanonicalRate) return clip;
  storage = resample_to(clip, kCanonicalRate);
  return storage;
}

FrameLayout long_segments(const AudioClip& clip, const char* what) {
  if (clip.samples.size() < kSegmentSamples) {
    std::ostringstream msg;
    msg << what << " needs at least " << segment_window_seconds() << " s of audio, got " << clip.duration_seconds()
        << " s";
    throw ValidationError(msg.str());
  }
  return frame_layout(clip.samples.size(), clip.sample_rate, segment_window_seconds(), kSegmentHopSeconds);
}

double kl_term(double a, double m) { return a > 0.0 ? a * std::log2(a / m) : 0.0; }

double jsd_unchecked(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (m <= 0.0) continue;
    acc += kl_term(p[i], m) + kl_term(q[i], m);
  }
  return std::clamp(0.5 * acc, 0.0, 1.0);
}

void check_distribution(std::span<const double> p, const char* name) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ValidationError(std::string("jsd: ") + name + " has negative or non-finite mass");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kDistributionTolerance) {
    throw ValidationError(std::string("jsd: ") + name + " does not sum to 1");
  }
}

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ValidationError("jsd: dimension mismatch");
  if (p.empty()) throw ValidationError("jsd: empty distributions");
  check_distribution(p, "p");
  check_distribution(q, "q");
  return jsd_unchecked(p, q);
}

std::string_view component_name(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::Chroma: return "chroma";
    case ComponentKind::Rhythm: return "rhythm";
    case ComponentKind::Timbre: return "timbre";
  }
  return "?";
}

ComponentSequence chroma_sequence(const AudioClip& input) {
  AudioClip storage;
  const AudioClip& clip = canonical(input, storage);
  const auto seg_len = static_cast<std::size_t>(std::llround(kChromaSegmentSeconds * clip.sample_rate));
  if (clip.samples.size() < seg_len) throw ValidationError("chroma needs at least 0.25 s of audio");
  const auto layout = frame_layout(clip.samples.size(), clip.sample_rate, kChromaSegmentSeconds, kChromaSegmentSeconds);

  RealFft fft(layout.length);
  const auto window = hamming_coefficients(layout.length);
  const double bin_hz = static_cast<double>(clip.sample_rate) / layout.length;

  // pitch class per FFT bin, -1 outside the analysed range
  std::vector<int> bin_class(fft.bins(), -1);
  for (std::size_t k = 1; k < fft.bins(); ++k) {
    const double f = k * bin_hz;
    if (f < kChromaLowHz || f > kChromaHighHz) continue;
    const long semis = std::lround(12.0 * std::log2(f / 440.0));
    bin_class[k] = static_cast<int>(((semis + 9) % 12 + 12) % 12);
  }

  ComponentSequence seq;
  seq.kind = ComponentKind::Chroma;
  seq.segment_seconds = kChromaSegmentSeconds;
  seq.dim = 12;
  seq.vectors.reserve(layout.count());
  std::vector<double> buf(layout.length);
  std::vector<double> mag(fft.bins());
  for (std::size_t start : layout.starts) {
    for (std::size_t i = 0; i < layout.length; ++i) buf[i] = clip.samples[start + i] * window[i];
    fft.magnitude(buf, mag);
    std::vector<double> pc(12, 0.0);
    for (std::size_t k = 0; k < mag.size(); ++k) {
      if (bin_class[k] >= 0) pc[bin_class[k]] += mag[k] * mag[k];
    }
    const double total = std::accumulate(pc.begin(), pc.end(), 0.0);
    if (total > 0.0) {
      for (double& v : pc) v /= total;
    } else {
      std::fill(pc.begin(), pc.end(), 1.0 / 12.0);
    }
    seq.vectors.push_back(std::move(pc));
  }
  return seq;
}

ComponentSequence rhythm_sequence(const AudioClip& input) {
  AudioClip storage;
  const AudioClip& clip = canonical(input, storage);
  const auto layout = long_segments(clip, "rhythm");

  RealFft frame_fft(kSegmentFrameSamples);
  RealFft mod_fft(kSegmentFrames);
  const MelFilterbank bank(kSegmentFrameSamples, clip.sample_rate, kRhythmBands);
  const auto taper = hamming_coefficients(kSegmentFrames);

  ComponentSequence seq;
  seq.kind = ComponentKind::Rhythm;
  seq.segment_seconds = kSegmentHopSeconds;
  seq.dim = kRhythmBands * kRhythmModulationBins;
  seq.vectors.reserve(layout.count());

  // trajectory[b * 256 + t] = energy of band b in frame t
  std::vector<double> trajectory(kRhythmBands * kSegmentFrames);
  std::vector<double> mag(frame_fft.bins());
  std::vector<double> bands(kRhythmBands);
  std::vector<double> series(kSegmentFrames);
  std::vector<double> mod(mod_fft.bins());

  for (std::size_t start : layout.starts) {
    for (std::size_t t = 0; t < kSegmentFrames; ++t) {
      const double* frame = clip.samples.data() + start + t * kSegmentFrameSamples;
      frame_fft.magnitude(std::span<const double>(frame, kSegmentFrameSamples), mag);
      bank.apply(mag, bands);
      for (int b = 0; b < kRhythmBands; ++b) trajectory[b * kSegmentFrames + t] = bands[b];
    }
    std::vector<double> fp(seq.dim, 0.0);
    for (int b = 0; b < kRhythmBands; ++b) {
      const double* row = &trajectory[b * kSegmentFrames];
      const double mean = std::accumulate(row, row + kSegmentFrames, 0.0) / kSegmentFrames;
      for (std::size_t t = 0; t < kSegmentFrames; ++t) series[t] = (row[t] - mean) * taper[t];
      mod_fft.magnitude(series, mod);
      for (int m = 0; m < kRhythmModulationBins; ++m) fp[b * kRhythmModulationBins + m] = mod[m + 1];
    }
    seq.vectors.push_back(std::move(fp));
  }
  return seq;
}

ComponentSequence timbre_sequence(const AudioClip& input) {
  AudioClip storage;
  const AudioClip& clip = canonical(input, storage);
  const auto layout = long_segments(clip, "timbre");

  RealFft fft(kSegmentFrameSamples);
  const MelFilterbank bank(kSegmentFrameSamples, clip.sample_rate, kTimbreBands);
  const Mfcc dct(kTimbreBands, kTimbreBands);
  const auto window = hamming_coefficients(kSegmentSamples);

  ComponentSequence seq;
  seq.kind = ComponentKind::Timbre;
  seq.segment_seconds = kSegmentHopSeconds;
  seq.dim = kTimbreBands;
  seq.vectors.reserve(layout.count());

  std::vector<double> frame(kSegmentFrameSamples);
  std::vector<double> mag(fft.bins());
  std::vector<double> bands(kTimbreBands);
  std::vector<double> coeffs(kTimbreBands);
  for (std::size_t start : layout.starts) {
    std::vector<double> mean(kTimbreBands, 0.0);
    for (std::size_t t = 0; t < kSegmentFrames; ++t) {
      const std::size_t offset = t * kSegmentFrameSamples;
      for (std::size_t i = 0; i < kSegmentFrameSamples; ++i) {
        frame[i] = clip.samples[start + offset + i] * window[offset + i];
      }
      fft.magnitude(frame, mag);
      bank.apply(mag, bands);
      dct.compute(bands, coeffs);
      for (int c = 0; c < kTimbreBands; ++c) mean[c] += coeffs[c];
    }
    for (double& v : mean) v /= kSegmentFrames;
    seq.vectors.push_back(std::move(mean));
  }
  return seq;
}

std::vector<double> to_distribution(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  if (out.empty()) return out;
  const double lo = *std::min_element(out.begin(), out.end());
  if (lo < 0.0) {
    for (double& x : out) x = x - lo + kShiftEpsilon;
  }
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  if (total > 0.0) {
    for (double& x : out) x /= total;
  } else {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
  }
  return out;
}

std::vector<double> structural_change_series(const ComponentSequence& seq, int j) {
  if (j < 1 || j > 30) throw ValidationError("structural_change: window index j out of range");
  const std::size_t w = window_segments(j);
  const std::size_t n = seq.size();
  if (n < 2 * w) return {};
  const std::size_t d = seq.dim;
  for (const auto& v : seq.vectors) {
    if (v.size() != d) throw ValidationError("structural_change: ragged component sequence");
  }

  // Running sums over [i - w, i - 1] and [i, i + w - 1], slid one step at a time.
  std::vector<double> left(d, 0.0);
  std::vector<double> right(d, 0.0);
  for (std::size_t k = 0; k < w; ++k) {
    for (std::size_t c = 0; c < d; ++c) {
      left[c] += seq.vectors[k][c];
      right[c] += seq.vectors[w + k][c];
    }
  }

  std::vector<double> out;
  out.reserve(n - 2 * w + 1);
  for (std::size_t i = w;; ++i) {
    out.push_back(jsd_unchecked(to_distribution(left), to_distribution(right)));
    if (i + w >= n) break;
    const auto& leaving_left = seq.vectors[i - w];
    const auto& crossing = seq.vectors[i];
    const auto& entering_right = seq.vectors[i + w];
    for (std::size_t c = 0; c < d; ++c) {
      left[c] += crossing[c] - leaving_left[c];
      right[c] += entering_right[c] - crossing[c];
    }
  }
  return out;
}

StructuralChangeResult structural_change(const ComponentSequence& seq, std::span<const int> j_values) {
  StructuralChangeResult result;
  for (int j : j_values) {
    const auto series = structural_change_series(seq, j);
    if (series.empty()) {
      result.missing.push_back(j);
      continue;
    }
    result.mean_sc[j] = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(series.size());
  }
  return result;
}

std::pair<double, double> arousal(const AudioClip& input) {
  AudioClip storage;
  const AudioClip& clip = canonical(input, storage);
  const auto layout = long_segments(clip, "arousal");
  const auto window = hamming_coefficients(kSegmentSamples);

  std::vector<double> magnitudes;
  magnitudes.reserve(layout.count());
  for (std::size_t start : layout.starts) {
    double acc = 0.0;
    for (std::size_t i = 0; i < kSegmentSamples; ++i) acc += std::abs(clip.samples[start + i] * window[i]);
    magnitudes.push_back(acc);
  }
  const double n = static_cast<double>(magnitudes.size());
  const double mean = std::accumulate(magnitudes.begin(), magnitudes.end(), 0.0) / n;
  double ss = 0.0;
  for (double m : magnitudes) ss += (m - mean) * (m - mean);
  return {mean, std::sqrt(ss / n)};
}

const std::array<std::string, kComplexityDim>& complexity_feature_names() {
  static const std::array<std::string, kComplexityDim> names = [] {
    std::array<std::string, kComplexityDim> n;
    for (int i = 0; i < 6; ++i) {
      n[i] = "ChromaSC" + std::to_string(i + 1);
      n[6 + i] = "RhythmSC" + std::to_string(i + 1);
      n[12 + i] = "TimbreSC" + std::to_string(i + 1);
    }
    n[18] = "ArousalMean";
    n[19] = "ArousalStd";
    return n;
  }();
  return names;
}

double complexity_min_seconds() {
  const double chroma = 2.0 * window_segments(kChromaScales.back()) * kChromaSegmentSeconds;
  const double segs = 2.0 * window_segments(kRhythmTimbreScales.back());
  const double long_form = (segs - 1.0) * kSegmentHopSeconds + segment_window_seconds();
  return std::max(chroma, long_form);
}

ComplexityFeatureVector complexity_vector(const AudioClip& input) {
  AudioClip storage;
  const AudioClip& clip = canonical(input, storage);
  if (clip.samples.size() < kSegmentSamples) {
    std::ostringstream msg;
    msg << "complexity features need at least " << complexity_min_seconds() << " s of audio, got "
        << clip.duration_seconds() << " s";
    throw ValidationError(msg.str());
  }

  const auto chroma = structural_change(chroma_sequence(clip), kChromaScales);
  const auto rhythm = structural_change(rhythm_sequence(clip), kRhythmTimbreScales);
  const auto timbre = structural_change(timbre_sequence(clip), kRhythmTimbreScales);

  std::vector<std::string> missing;
  const auto& names = complexity_feature_names();
  auto collect = [&](const StructuralChangeResult& r, std::span<const int> scales, std::size_t offset) {
    for (std::size_t s = 0; s < scales.size(); ++s) {
      if (!r.mean_sc.count(scales[s])) missing.push_back(names[offset + s] + " (j=" + std::to_string(scales[s]) + ")");
    }
  };
  collect(chroma, kChromaScales, 0);
  collect(rhythm, kRhythmTimbreScales, 6);
  collect(timbre, kRhythmTimbreScales, 12);
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "clip of " << clip.duration_seconds() << " s is too short for";
    for (std::size_t i = 0; i < missing.size(); ++i) msg << (i ? ", " : " ") << missing[i];
    msg << "; need " << complexity_min_seconds() << " s";
    throw ValidationError(msg.str());
  }

  ComplexityFeatureVector out;
  for (std::size_t s = 0; s < 6; ++s) {
    out.values[s] = chroma.mean_sc.at(kChromaScales[s]);
    out.values[6 + s] = rhythm.mean_sc.at(kRhythmTimbreScales[s]);
    out.values[12 + s] = timbre.mean_sc.at(kRhythmTimbreScales[s]);
  }
  const auto [mean, stdev] = arousal(clip);
  out.values[18] = mean;
  out.values[19] = stdev;
  return out;
}

}  // namespace popmir

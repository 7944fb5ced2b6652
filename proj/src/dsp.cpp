#include "popmir/dsp.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

#include "popmir/error.h"

namespace popmir {

std::string fft_library_version() { return fftw_version; }

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

FrameLayout frame_layout(std::size_t n_samples, int sample_rate, double window_seconds, double hop_seconds) {
  if (sample_rate <= 0) throw ValidationError("frame_layout: sample rate must be positive");
  if (!(hop_seconds > 0.0) || !(window_seconds >= hop_seconds)) {
    throw ValidationError("frame_layout: need window >= hop > 0");
  }
  FrameLayout layout;
  layout.length = static_cast<std::size_t>(std::llround(window_seconds * sample_rate));
  if (layout.length == 0) throw ValidationError("frame_layout: window shorter than one sample");
  if (n_samples < layout.length) {
    throw ValidationError("signal of " + std::to_string(n_samples) + " samples is shorter than one " +
                          std::to_string(window_seconds) + " s window");
  }
  const double hop_samples = hop_seconds * sample_rate;
  for (std::size_t k = 0;; ++k) {
    const auto start = static_cast<std::size_t>(std::llround(static_cast<double>(k) * hop_samples));
    if (start + layout.length > n_samples) break;
    layout.starts.push_back(start);
  }
  return layout;
}

std::vector<Frame> frame_signal(const AudioClip& clip, double window_seconds, double hop_seconds) {
  const auto layout = frame_layout(clip.samples.size(), clip.sample_rate, window_seconds, hop_seconds);
  std::vector<Frame> frames;
  frames.reserve(layout.count());
  for (std::size_t start : layout.starts) {
    frames.emplace_back(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                        clip.samples.begin() + static_cast<std::ptrdiff_t>(start + layout.length));
  }
  return frames;
}

std::vector<double> hamming_coefficients(std::size_t n) {
  if (n < 2) throw ValidationError("hamming window needs length >= 2");
  std::vector<double> w(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / denom);
  return w;
}

Frame hamming_window(Frame frame) {
  const auto w = hamming_coefficients(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) frame[i] *= w[i];
  return frame;
}

// ---------------------------------------------------------------------------

struct RealFft::Impl {
  fftw_plan plan = nullptr;
  std::vector<double> in;
  std::vector<std::complex<double>> out;

  ~Impl() {
    if (plan) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

RealFft::RealFft(std::size_t n) : n_(n), impl_(std::make_unique<Impl>()) {
  if (n < 2) throw ValidationError("fft size must be >= 2");
  impl_->in.resize(n);
  impl_->out.resize(n / 2 + 1);
  std::lock_guard lock(planner_mutex());
  // FFTW_UNALIGNED keeps the chosen codelets independent of buffer alignment,
  // so results are bit-reproducible across runs.
  impl_->plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), impl_->in.data(),
                                     reinterpret_cast<fftw_complex*>(impl_->out.data()),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!impl_->plan) throw RuntimeError("fftw: failed to plan size " + std::to_string(n));
}

RealFft::~RealFft() = default;
RealFft::RealFft(RealFft&&) noexcept = default;
RealFft& RealFft::operator=(RealFft&&) noexcept = default;

void RealFft::transform(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() != n_ || out.size() != bins()) throw ValidationError("fft: buffer size mismatch");
  std::copy(in.begin(), in.end(), impl_->in.begin());
  fftw_execute(impl_->plan);
  std::copy(impl_->out.begin(), impl_->out.end(), out.begin());
}

void RealFft::magnitude(std::span<const double> in, std::span<double> out) {
  if (in.size() != n_ || out.size() != bins()) throw ValidationError("fft: buffer size mismatch");
  std::copy(in.begin(), in.end(), impl_->in.begin());
  fftw_execute(impl_->plan);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::abs(impl_->out[k]);
}

std::vector<double> magnitude_spectrum(std::span<const double> frame) {
  RealFft fft(frame.size());
  std::vector<double> out(fft.bins());
  fft.magnitude(frame, out);
  return out;
}

// ---------------------------------------------------------------------------

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t fft_size, int sample_rate, int n_bands)
    : fft_size_(fft_size), sample_rate_(sample_rate) {
  if (n_bands < 1) throw ValidationError("mel filterbank needs at least one band");
  if (fft_size < 2 || sample_rate <= 0) throw ValidationError("mel filterbank: bad fft size or rate");

  const double top = hz_to_mel(sample_rate / 2.0);
  points_hz_.resize(n_bands + 2);
  for (int i = 0; i < n_bands + 2; ++i) points_hz_[i] = mel_to_hz(top * i / (n_bands + 1));
  points_hz_.front() = 0.0;
  points_hz_.back() = sample_rate / 2.0;

  const std::size_t n_bins = spectrum_bins();
  const double bin_hz = static_cast<double>(sample_rate) / fft_size;
  filters_.resize(n_bands);
  for (int b = 0; b < n_bands; ++b) {
    auto& f = filters_[b];
    std::size_t k = 0;
    while (k < n_bins && weight(b, k * bin_hz) == 0.0) ++k;
    f.first_bin = k;
    for (; k < n_bins; ++k) {
      const double w = weight(b, k * bin_hz);
      if (w == 0.0 && k * bin_hz >= points_hz_[b + 2]) break;
      f.weights.push_back(w);
    }
  }
}

double MelFilterbank::center_hz(int band) const { return points_hz_.at(band + 1); }

double MelFilterbank::weight(int band, double hz) const {
  const double lo = points_hz_[band];
  const double c = points_hz_[band + 1];
  const double hi = points_hz_[band + 2];
  if (hz > lo && hz <= c) return (hz - lo) / (c - lo);
  if (hz > c && hz < hi) return (hi - hz) / (hi - c);
  return 0.0;
}

void MelFilterbank::apply(std::span<const double> spectrum, std::span<double> out) const {
  if (spectrum.size() != spectrum_bins()) {
    throw ValidationError("mel filterbank expects " + std::to_string(spectrum_bins()) + " bins, got " +
                          std::to_string(spectrum.size()));
  }
  if (out.size() != filters_.size()) throw ValidationError("mel filterbank: output size mismatch");
  for (std::size_t b = 0; b < filters_.size(); ++b) {
    const auto& f = filters_[b];
    double acc = 0.0;
    for (std::size_t i = 0; i < f.weights.size(); ++i) acc += f.weights[i] * spectrum[f.first_bin + i];
    out[b] = acc;
  }
}

std::vector<double> MelFilterbank::apply(std::span<const double> spectrum) const {
  std::vector<double> out(filters_.size());
  apply(spectrum, out);
  return out;
}

std::vector<double> mel_filterbank_energies(std::span<const double> spectrum, int sample_rate, int n_bands,
                                            std::size_t fft_size) {
  if (spectrum.size() < 2) throw ValidationError("spectrum needs at least 2 bins");
  if (fft_size == 0) fft_size = 2 * (spectrum.size() - 1);
  return MelFilterbank(fft_size, sample_rate, n_bands).apply(spectrum);
}

// ---------------------------------------------------------------------------

Mfcc::Mfcc(int n_bands, int n_coeffs) : n_bands_(n_bands), n_coeffs_(n_coeffs) {
  if (n_coeffs < 1 || n_coeffs > n_bands) {
    throw ValidationError("mfcc: need 1 <= n_coeffs <= bands (" + std::to_string(n_coeffs) + " vs " +
                          std::to_string(n_bands) + ")");
  }
  table_.resize(static_cast<std::size_t>(n_coeffs) * n_bands);
  for (int k = 0; k < n_coeffs; ++k) {
    for (int n = 0; n < n_bands; ++n) {
      table_[static_cast<std::size_t>(k) * n_bands + n] =
          std::cos(std::numbers::pi * k * (2.0 * n + 1.0) / (2.0 * n_bands));
    }
  }
}

void Mfcc::compute(std::span<const double> band_energies, std::span<double> out) const {
  if (band_energies.size() != static_cast<std::size_t>(n_bands_) || out.size() != static_cast<std::size_t>(n_coeffs_)) {
    throw ValidationError("mfcc: size mismatch");
  }
  double logs[256];
  std::vector<double> heap;
  double* x = logs;
  if (n_bands_ > 256) {
    heap.resize(n_bands_);
    x = heap.data();
  }
  for (int n = 0; n < n_bands_; ++n) x[n] = std::log(band_energies[n] + kLogFloor);
  for (int k = 0; k < n_coeffs_; ++k) {
    const double* row = &table_[static_cast<std::size_t>(k) * n_bands_];
    double acc = 0.0;
    for (int n = 0; n < n_bands_; ++n) acc += row[n] * x[n];
    out[k] = acc;
  }
}

std::vector<double> mfcc(std::span<const double> band_energies, int n_coeffs) {
  Mfcc m(static_cast<int>(band_energies.size()), n_coeffs);
  std::vector<double> out(n_coeffs);
  m.compute(band_energies, out);
  return out;
}

}  // namespace popmir

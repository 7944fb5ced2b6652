#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "popmir/audio.h"

namespace popmir {

using Frame = std::vector<double>;

/// Version string of the FFT backend.
std::string fft_library_version();

/// Positions of fixed-length frames over a signal. Frame k starts at sample
/// round(k * hop * rate) and spans round(window * rate) samples; frames that
/// would run past the end are dropped.
struct FrameLayout {
  std::size_t length = 0;
  std::vector<std::size_t> starts;

  std::size_t count() const { return starts.size(); }
};

/// Throws ValidationError when the signal is shorter than one window or the
/// window/hop pair is invalid.
FrameLayout frame_layout(std::size_t n_samples, int sample_rate, double window_seconds, double hop_seconds);

std::vector<Frame> frame_signal(const AudioClip& clip, double window_seconds, double hop_seconds);

/// Symmetric Hamming: 0.54 - 0.46 cos(2 pi n / (N - 1)).
std::vector<double> hamming_coefficients(std::size_t n);
Frame hamming_window(Frame frame);

/// Reusable one-sided real FFT of a fixed size. Plans are created under a
/// process-wide lock; execution is safe from multiple threads as long as each
/// thread uses its own instance.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&&) noexcept;
  RealFft& operator=(RealFft&&) noexcept;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  /// |X_k| for k = 0 .. n/2. `out` must hold bins() values.
  void magnitude(std::span<const double> in, std::span<double> out);
  /// Raw complex coefficients, bins() values.
  void transform(std::span<const double> in, std::span<std::complex<double>> out);

 private:
  struct Impl;
  std::size_t n_ = 0;
  std::unique_ptr<Impl> impl_;
};

/// Magnitude of the one-sided DFT; length floor(N/2) + 1.
std::vector<double> magnitude_spectrum(std::span<const double> frame);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters with centres equally spaced on the mel scale between
/// 0 Hz and Nyquist. Band b rises from point b to point b+1 and falls to b+2.
class MelFilterbank {
 public:
  /// `fft_size` is the transform length the spectrum came from.
  MelFilterbank(std::size_t fft_size, int sample_rate, int n_bands);

  int bands() const { return static_cast<int>(filters_.size()); }
  std::size_t spectrum_bins() const { return fft_size_ / 2 + 1; }
  double center_hz(int band) const;
  double weight(int band, double hz) const;

  void apply(std::span<const double> spectrum, std::span<double> out) const;
  std::vector<double> apply(std::span<const double> spectrum) const;

 private:
  struct Filter {
    std::size_t first_bin = 0;
    std::vector<double> weights;
  };
  std::size_t fft_size_;
  int sample_rate_;
  std::vector<double> points_hz_;
  std::vector<Filter> filters_;
};

/// Filterbank energies for a magnitude spectrum. `fft_size` = 0 means the
/// even length 2 * (bins - 1).
std::vector<double> mel_filterbank_energies(std::span<const double> spectrum, int sample_rate, int n_bands,
                                            std::size_t fft_size = 0);

inline constexpr double kLogFloor = 1e-10;

/// DCT-II of log(energy + 1e-10): c_k = sum_n x_n cos(pi k (2n + 1) / (2N)),
/// unnormalised, k < n_coeffs.
class Mfcc {
 public:
  Mfcc(int n_bands, int n_coeffs);
  int coeffs() const { return n_coeffs_; }
  void compute(std::span<const double> band_energies, std::span<double> out) const;

 private:
  int n_bands_;
  int n_coeffs_;
  std::vector<double> table_;
};

std::vector<double> mfcc(std::span<const double> band_energies, int n_coeffs);

}  // namespace popmir

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace popmir {

inline constexpr int kCanonicalRate = 44100;

/// Mono audio with samples nominally in [-1, 1].
struct AudioClip {
  int sample_rate = kCanonicalRate;
  std::vector<double> samples;

  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// RIFF/WAVE, PCM 16-bit, mono or stereo (stereo is averaged). Samples are
/// scaled by 1/32768.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip read_wav_file(const std::filesystem::path& path);

/// 16-bit mono PCM; samples are clamped to the representable range.
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
void write_wav_file(const std::filesystem::path& path, const AudioClip& clip);

/// Linear-interpolation resampling. Output length is round(n * target / source).
AudioClip resample_to(const AudioClip& clip, int target_rate = kCanonicalRate);

}  // namespace popmir

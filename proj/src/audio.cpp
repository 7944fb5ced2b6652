#include "popmir/audio.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "popmir/error.h"

namespace popmir {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw ValidationError("wav: not a RIFF/WAVE stream");
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (tag_is(bytes, pos, "fmt ")) {
      if (size < 16 || body + size > bytes.size()) throw ValidationError("wav: truncated fmt chunk");
      std::uint16_t format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      if (format == kFormatExtensible && size >= 26) format = read_u16(bytes, body + 24);
      if (format != kFormatPcm) throw ValidationError("wav: unsupported format tag " + std::to_string(format) + " (PCM only)");
      if (bits != 16) throw ValidationError("wav: unsupported bit depth " + std::to_string(bits) + " (16-bit only)");
      if (channels != 1 && channels != 2) {
        throw ValidationError("wav: unsupported channel count " + std::to_string(channels));
      }
      if (rate == 0) throw ValidationError("wav: zero sample rate");
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) throw ValidationError("wav: data chunk before fmt chunk");
      if (body + size > bytes.size()) throw ValidationError("wav: truncated data chunk");
      const std::size_t frame_bytes = 2u * channels;
      if (size % frame_bytes != 0) throw ValidationError("wav: data size is not a whole number of frames");
      const std::size_t n = size / frame_bytes;
      if (n == 0) throw ValidationError("wav: no samples");

      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          acc += static_cast<std::int16_t>(read_u16(bytes, body + i * frame_bytes + 2 * c));
        }
        clip.samples[i] = acc / channels / 32768.0;
      }
      return clip;
    }
    pos = body + size + (size & 1u);
  }
  throw ValidationError(have_fmt ? "wav: missing data chunk" : "wav: missing fmt chunk");
}

AudioClip read_wav_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * n);
  put_tag(out, "RIFF");
  put_u32(out, 36 + 2 * n);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, 2 * n);
  for (double s : clip.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return out;
}

void write_wav_file(const std::filesystem::path& path, const AudioClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  const auto bytes = encode_wav(clip);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

AudioClip resample_to(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw ValidationError("resample target rate must be positive");
  if (clip.sample_rate == target_rate) return clip;
  if (clip.samples.empty()) return AudioClip{target_rate, {}};

  const std::size_t n = clip.samples.size();
  const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(n) * target_rate / clip.sample_rate));

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = i * ratio;
    const auto k = static_cast<std::size_t>(pos);
    if (k + 1 >= n) {
      out.samples[i] = clip.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(k);
    out.samples[i] = clip.samples[k] + frac * (clip.samples[k + 1] - clip.samples[k]);
  }
  return out;
}

}  // namespace popmir

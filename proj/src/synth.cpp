#include "popmir/synth.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <numeric>
#include <numbers>
#include <random>

#include "popmir/error.h"

namespace popmir {

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t sample_count(double seconds, int rate) {
  if (!(seconds >= 0) || rate <= 0) throw ValidationError("invalid duration or sample rate");
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

}  // namespace

AudioClip sine_tone(double freq_hz, double seconds, double amplitude, int sample_rate) {
  AudioClip clip{sample_rate, std::vector<double>(sample_count(seconds, sample_rate))};
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate;
  for (std::size_t n = 0; n < clip.samples.size(); ++n) clip.samples[n] = amplitude * std::sin(w * n);
  return clip;
}

AudioClip silence(double seconds, int sample_rate) {
  return {sample_rate, std::vector<double>(sample_count(seconds, sample_rate), 0.0)};
}

AudioClip white_noise(double seconds, double amplitude, std::uint64_t seed, int sample_rate) {
  AudioClip clip{sample_rate, std::vector<double>(sample_count(seconds, sample_rate))};
  std::mt19937_64 rng(seed);
  for (auto& s : clip.samples) s = amplitude * (2.0 * unit_uniform(rng) - 1.0);
  return clip;
}

AudioClip am_tone(double carrier_hz, double modulation_hz, double depth, double seconds, double amplitude,
                  int sample_rate) {
  AudioClip clip = sine_tone(carrier_hz, seconds, amplitude, sample_rate);
  const double w = 2.0 * std::numbers::pi * modulation_hz / sample_rate;
  for (std::size_t n = 0; n < clip.samples.size(); ++n) {
    clip.samples[n] *= (1.0 + depth * std::sin(w * n)) / (1.0 + depth);
  }
  return clip;
}

AudioClip chord_progression_clip(const ChordClipSpec& spec, int sample_rate) {
  if (!(spec.change_seconds > 0)) throw ValidationError("change_seconds must be positive");
  AudioClip clip{sample_rate, std::vector<double>(sample_count(spec.seconds, sample_rate), 0.0)};
  std::mt19937_64 rng(spec.seed);
  const std::size_t chord_len = std::max<std::size_t>(1, sample_count(spec.change_seconds, sample_rate));
  const std::size_t ramp = std::min<std::size_t>(chord_len / 4, static_cast<std::size_t>(0.005 * sample_rate));
  constexpr int kHarmonics = 3;
  constexpr double kNyquistGuard = 0.45;

  for (std::size_t start = 0; start < clip.samples.size(); start += chord_len) {
    const std::size_t end = std::min(clip.samples.size(), start + chord_len);
    const int root = static_cast<int>(unit_uniform(rng) * 12.0);
    const bool minor = unit_uniform(rng) < 0.5;
    const int notes[3] = {root, root + (minor ? 3 : 4), root + 7};

    // Phasor oscillators: one complex multiply per partial per sample.
    std::vector<std::complex<double>> phase;
    std::vector<std::complex<double>> step;
    std::vector<double> gain;
    for (int note : notes) {
      const double f0 = 220.0 * std::pow(2.0, note / 12.0);  // A3 upwards
      for (int h = 1; h <= kHarmonics; ++h) {
        const double f = f0 * h;
        if (f >= kNyquistGuard * sample_rate) continue;
        phase.emplace_back(1.0, 0.0);
        step.push_back(std::polar(1.0, 2.0 * std::numbers::pi * f / sample_rate));
        gain.push_back(spec.amplitude / (3.0 * h * 1.8333));  // 1 + 1/2 + 1/3
      }
    }
    for (std::size_t n = start; n < end; ++n) {
      double v = 0.0;
      for (std::size_t p = 0; p < phase.size(); ++p) {
        v += gain[p] * phase[p].imag();
        phase[p] *= step[p];
      }
      const std::size_t pos = n - start;
      double env = 1.0;
      if (ramp > 0 && pos < ramp) env = static_cast<double>(pos) / ramp;
      if (ramp > 0 && end - n <= ramp) env = std::min(env, static_cast<double>(end - n - 1) / ramp);
      clip.samples[n] = v * env;
    }
  }

  if (spec.pulse_hz > 0.0) {
    const double w = 2.0 * std::numbers::pi * spec.pulse_hz / sample_rate;
    for (std::size_t n = 0; n < clip.samples.size(); ++n) clip.samples[n] *= 0.6 + 0.4 * std::cos(w * n);
  }
  if (spec.noise > 0.0) {
    std::mt19937_64 noise_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    for (auto& s : clip.samples) s += spec.noise * (2.0 * unit_uniform(noise_rng) - 1.0);
  }
  return clip;
}

std::vector<ChartEntry> planted_chart(const std::vector<PlantedSong>& songs, int max_rank) {
  std::map<Date, std::vector<const PlantedSong*>> weeks;
  for (const auto& s : songs) {
    if (s.length < 1) throw ValidationError("song " + s.song_id + " needs a positive length");
    for (int w = 0; w < s.length; ++w) weeks[s.debut + std::chrono::days(7 * w)].push_back(&s);
  }
  std::vector<ChartEntry> out;
  for (auto& [week, members] : weeks) {
    if (static_cast<int>(members.size()) > max_rank) {
      throw ValidationError("week " + format_iso_date(week) + " holds more than " + std::to_string(max_rank) +
                            " songs");
    }
    std::sort(members.begin(), members.end(), [](const PlantedSong* a, const PlantedSong* b) {
      if (a->strength != b->strength) return a->strength > b->strength;
      return a->song_id < b->song_id;
    });
    for (std::size_t r = 0; r < members.size(); ++r) {
      const auto& s = *members[r];
      out.push_back({week, static_cast<int>(r) + 1, s.song_id, "Track " + s.song_id, "Artist " + s.song_id});
    }
  }
  return out;
}

SyntheticCorpus synthetic_corpus(const CorpusSpec& spec) {
  if (spec.songs < 1 || spec.debut_weeks < 1) throw ValidationError("corpus needs songs and debut weeks");
  std::mt19937_64 rng(spec.seed);
  SyntheticCorpus c;
  std::vector<int> order(static_cast<std::size_t>(spec.songs));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i))]);
  }
  for (int i = 0; i < spec.songs; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%04d", i);
    c.song_ids.emplace_back(id);
    ChordClipSpec clip;
    clip.seconds = spec.seconds;
    clip.change_seconds = 0.25 * std::pow(32.0, unit_uniform(rng));
    clip.amplitude = 0.1 + 0.4 * unit_uniform(rng);
    clip.noise = 0.005;
    clip.pulse_hz = unit_uniform(rng) < 0.5 ? 0.0 : 1.0 + std::floor(7.0 * unit_uniform(rng));
    clip.seed = rng();
    c.clips.push_back(clip);
    const long week = static_cast<long>(order[static_cast<std::size_t>(i)]) * spec.debut_weeks / spec.songs;
    c.debuts.push_back(spec.start + std::chrono::days(7 * week));
    c.strengths.push_back(unit_uniform(rng));
  }
  return c;
}

std::vector<int> lengths_from_scores(std::span<const double> scores, int min_length, int max_length) {
  if (scores.empty()) return {};
  if (min_length < 1 || max_length < min_length) throw ValidationError("invalid length range");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<int> out(scores.size());
  const double denom = scores.size() > 1 ? static_cast<double>(scores.size() - 1) : 1.0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out[idx[r]] = min_length + static_cast<int>(std::lround(r * (max_length - min_length) / denom));
  }
  return out;
}

std::vector<PlantedSong> planted_songs(const SyntheticCorpus& corpus, std::span<const int> lengths) {
  if (lengths.size() != corpus.song_ids.size()) throw ValidationError("one length per song required");
  std::vector<PlantedSong> out;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    out.push_back({corpus.song_ids[i], corpus.debuts[i], lengths[i], corpus.strengths[i]});
  }
  return out;
}

}  // namespace popmir

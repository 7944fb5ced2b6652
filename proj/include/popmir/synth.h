#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "popmir/audio.h"
#include "popmir/chart.h"

namespace popmir {

AudioClip sine_tone(double freq_hz, double seconds, double amplitude = 0.5, int sample_rate = kCanonicalRate);
AudioClip silence(double seconds, int sample_rate = kCanonicalRate);
/// Uniform white noise in [-amplitude, amplitude].
AudioClip white_noise(double seconds, double amplitude, std::uint64_t seed, int sample_rate = kCanonicalRate);
/// Sine carrier with (1 + depth sin(2 pi mod t)) / (1 + depth) envelope.
AudioClip am_tone(double carrier_hz, double modulation_hz, double depth, double seconds, double amplitude = 0.5,
                  int sample_rate = kCanonicalRate);

struct ChordClipSpec {
  double seconds = 70.0;
  double change_seconds = 2.0;  // time between chord changes
  double amplitude = 0.3;
  double noise = 0.0;           // added white noise amplitude
  double pulse_hz = 0.0;        // optional amplitude pulse, 0 = none
  std::uint64_t seed = 0;
};

/// Random triads with three harmonics each, a new chord every
/// `change_seconds`; fully determined by the spec.
AudioClip chord_progression_clip(const ChordClipSpec& spec, int sample_rate = kCanonicalRate);

struct PlantedSong {
  std::string song_id;
  Date debut;
  int length = 3;         // consecutive chart weeks
  double strength = 0.0;  // higher ranks better among songs charting the same week
};

/// Weekly chart where each song occupies `length` consecutive weeks from
/// its debut. Each week's songs are ranked by strength (ties by id).
/// Throws ValidationError if a week holds more songs than `max_rank`.
std::vector<ChartEntry> planted_chart(const std::vector<PlantedSong>& songs, int max_rank = 100);

struct CorpusSpec {
  int songs = 300;
  double seconds = 66.5;
  int debut_weeks = 1000;  // debuts are spread evenly over this many weeks
  Date start = Date{std::chrono::year{2000} / 1 / 3};
  std::uint64_t seed = 1;
};

/// Song ids, clip parameters and debut weeks for a synthetic corpus. Chord
/// change periods are log-uniform in [0.25, 8] s.
struct SyntheticCorpus {
  std::vector<std::string> song_ids;
  std::vector<ChordClipSpec> clips;
  std::vector<Date> debuts;
  std::vector<double> strengths;
};

SyntheticCorpus synthetic_corpus(const CorpusSpec& spec);

/// Chart lengths that increase with `scores` (ties by position), spread over
/// [min_length, max_length].
std::vector<int> lengths_from_scores(std::span<const double> scores, int min_length, int max_length);

std::vector<PlantedSong> planted_songs(const SyntheticCorpus& corpus, std::span<const int> lengths);

}  // namespace popmir

#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "popmir/chart.h"

namespace popmir {

enum class Metric { Debut, Max, Mean, Std, Length, Sum, Skewness, Kurtosis };

inline constexpr std::array<Metric, 8> kAllMetrics{Metric::Debut,  Metric::Max,    Metric::Mean,
                                                   Metric::Std,    Metric::Length, Metric::Sum,
                                                   Metric::Skewness, Metric::Kurtosis};

std::string_view metric_name(Metric m);
/// Case-sensitive lookup of "Debut", "Max", ...; nullopt if unknown.
std::optional<Metric> metric_from_name(std::string_view name);

/// Eight-number summary of one song's chart run. Moments use 1/N
/// normalization; kurtosis is excess kurtosis (normal = 0).
struct PopularityMetrics {
  int debut = 0;
  int max = 0;
  double mean = 0.0;
  double std = 0.0;
  int length = 0;
  long long sum = 0;
  double skewness = 0.0;
  double kurtosis = 0.0;
  /// Set when all rank scores are equal; skewness/kurtosis are then 0.
  bool degenerate = false;

  double value(Metric m) const;
};

/// Throws ValidationError for fewer than 3 scores.
PopularityMetrics compute_metrics(std::span<const int> rank_scores);
PopularityMetrics compute_metrics(const SongHistory& history);

/// CSV: song_id,debut,max,mean,std,length,sum,skewness,kurtosis,degenerate
void write_metrics_csv(std::ostream& out, const std::vector<SongHistory>& histories,
                       const std::vector<PopularityMetrics>& metrics);

}  // namespace popmir

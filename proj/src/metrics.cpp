#include "popmir/metrics.h"

#include <algorithm>
#include <cmath>

#include "popmir/csv.h"
#include "popmir/error.h"

namespace popmir {

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::Debut: return "Debut";
    case Metric::Max: return "Max";
    case Metric::Mean: return "Mean";
    case Metric::Std: return "Std";
    case Metric::Length: return "Length";
    case Metric::Sum: return "Sum";
    case Metric::Skewness: return "Skewness";
    case Metric::Kurtosis: return "Kurtosis";
  }
  return "?";
}

std::optional<Metric> metric_from_name(std::string_view name) {
  for (Metric m : kAllMetrics) {
    if (metric_name(m) == name) return m;
  }
  return std::nullopt;
}

double PopularityMetrics::value(Metric m) const {
  switch (m) {
    case Metric::Debut: return debut;
    case Metric::Max: return max;
    case Metric::Mean: return mean;
    case Metric::Std: return std;
    case Metric::Length: return length;
    case Metric::Sum: return static_cast<double>(sum);
    case Metric::Skewness: return skewness;
    case Metric::Kurtosis: return kurtosis;
  }
  return 0.0;
}

PopularityMetrics compute_metrics(std::span<const int> scores) {
  if (scores.size() < 3) {
    throw ValidationError("popularity metrics need at least 3 weeks, got " + std::to_string(scores.size()));
  }
  PopularityMetrics pm;
  pm.debut = scores.front();
  pm.max = *std::max_element(scores.begin(), scores.end());
  pm.length = static_cast<int>(scores.size());
  for (int s : scores) pm.sum += s;

  const double n = static_cast<double>(scores.size());
  pm.mean = static_cast<double>(pm.sum) / n;

  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  bool all_equal = true;
  for (int s : scores) {
    if (s != scores.front()) all_equal = false;
    const double d = s - pm.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;

  if (all_equal) {
    pm.degenerate = true;
    return pm;
  }
  pm.std = std::sqrt(m2);
  pm.skewness = m3 / (m2 * pm.std);
  pm.kurtosis = m4 / (m2 * m2) - 3.0;
  return pm;
}

PopularityMetrics compute_metrics(const SongHistory& history) {
  return compute_metrics(std::span<const int>(history.rank_scores));
}

void write_metrics_csv(std::ostream& out, const std::vector<SongHistory>& histories,
                       const std::vector<PopularityMetrics>& metrics) {
  if (histories.size() != metrics.size()) throw ValidationError("histories/metrics size mismatch");
  out << "song_id,debut,max,mean,std,length,sum,skewness,kurtosis,degenerate\n";
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto& m = metrics[i];
    out << csv_escape(histories[i].song_id) << ',' << m.debut << ',' << m.max << ',' << format_double(m.mean)
        << ',' << format_double(m.std) << ',' << m.length << ',' << m.sum << ',' << format_double(m.skewness)
        << ',' << format_double(m.kurtosis) << ',' << (m.degenerate ? 1 : 0) << '\n';
  }
}

}  // namespace popmir

#include "popmir/analytics.h"

#include <algorithm>
#include <cmath>

#include "popmir/csv.h"
#include "popmir/error.h"

namespace popmir {

Histogram metric_histogram(std::span<const double> values, std::span<const double> bin_edges) {
  if (bin_edges.size() < 2) throw ValidationError("histogram needs at least one bin");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) throw ValidationError("histogram edges must be strictly increasing");
  }
  Histogram h;
  h.bin_edges.assign(bin_edges.begin(), bin_edges.end());
  const std::size_t bins = bin_edges.size() - 1;
  h.counts.assign(bins, 0);
  const double lo = bin_edges.front();
  const double hi = bin_edges.back();
  for (double v : values) {
    if (!(v >= lo && v <= hi)) continue;
    std::size_t k;
    if (v == hi) {
      k = bins - 1;
    } else {
      k = static_cast<std::size_t>(std::upper_bound(bin_edges.begin(), bin_edges.end(), v) - bin_edges.begin()) - 1;
    }
    ++h.counts[k];
  }
  return h;
}

std::vector<double> uniform_edges(double lo, double hi, int bins) {
  if (bins < 1 || !(hi > lo)) throw ValidationError("uniform_edges: need bins >= 1 and hi > lo");
  std::vector<double> edges(bins + 1);
  for (int i = 0; i <= bins; ++i) edges[i] = lo + (hi - lo) * i / bins;
  edges.back() = hi;
  return edges;
}

CumulativeDistribution empirical_cdf(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  CumulativeDistribution cdf;
  cdf.cumulative_fraction.resize(values.size());
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) cdf.cumulative_fraction[i] = (i + 1) / n;
  if (!values.empty()) cdf.cumulative_fraction.back() = 1.0;
  cdf.values = std::move(values);
  return cdf;
}

std::vector<PeriodCdf> decadal_cdf(const std::vector<SongHistory>& histories,
                                   const std::vector<DateInterval>& periods, Metric metric) {
  for (std::size_t i = 0; i < periods.size(); ++i) {
    if (periods[i].last < periods[i].first) throw ValidationError("period ends before it starts");
    for (std::size_t j = 0; j < i; ++j) {
      if (periods[i].first <= periods[j].last && periods[j].first <= periods[i].last) {
        throw ValidationError("periods overlap: " + format_iso_date(periods[j].first) + ".." +
                              format_iso_date(periods[j].last) + " and " + format_iso_date(periods[i].first) +
                              ".." + format_iso_date(periods[i].last));
      }
    }
  }
  std::vector<PeriodCdf> out;
  out.reserve(periods.size());
  for (const auto& period : periods) {
    PeriodCdf pc;
    pc.period = period;
    std::vector<double> values;
    for (std::size_t s = 0; s < histories.size(); ++s) {
      const auto& h = histories[s];
      if (h.weeks.empty()) continue;
      if (period.contains(h.first_week()) && period.contains(h.last_week())) {
        pc.members.push_back(s);
        values.push_back(compute_metrics(h).value(metric));
      }
    }
    pc.cdf = empirical_cdf(std::move(values));
    out.push_back(std::move(pc));
  }
  return out;
}

std::map<int, DebutMaxStats> debut_vs_max_profile(std::span<const PopularityMetrics> metrics) {
  if (metrics.empty()) throw ValidationError("debut_vs_max_profile: no songs");
  std::map<int, std::vector<double>> groups;
  for (const auto& m : metrics) groups[m.debut].push_back(m.max);
  std::map<int, DebutMaxStats> out;
  for (const auto& [debut, maxes] : groups) {
    DebutMaxStats st;
    st.count = maxes.size();
    double sum = 0.0;
    for (double v : maxes) sum += v;
    st.mean_max = sum / st.count;
    double ss = 0.0;
    for (double v : maxes) ss += (v - st.mean_max) * (v - st.mean_max);
    st.std_max = std::sqrt(ss / st.count);
    out.emplace(debut, st);
  }
  return out;
}

std::map<int, double> top_rank_proportion_by_debut(std::span<const PopularityMetrics> metrics, int max_rank) {
  if (metrics.empty()) throw ValidationError("top_rank_proportion_by_debut: no songs");
  std::map<int, std::pair<std::size_t, std::size_t>> tally;  // debut -> (reached top, total)
  for (const auto& m : metrics) {
    auto& t = tally[m.debut];
    if (m.max == max_rank) ++t.first;
    ++t.second;
  }
  std::map<int, double> out;
  for (const auto& [debut, t] : tally) out.emplace(debut, static_cast<double>(t.first) / t.second);
  return out;
}

AgreementMatrix group_agreement_matrix(const std::vector<bool>& correct_a, const std::vector<bool>& correct_b) {
  if (correct_a.size() != correct_b.size()) throw ValidationError("agreement matrix: length mismatch");
  if (correct_a.empty()) throw ValidationError("agreement matrix: empty input");
  std::size_t hh = 0, hm = 0, mh = 0, mm = 0;
  for (std::size_t i = 0; i < correct_a.size(); ++i) {
    const bool a = correct_a[i];
    const bool b = correct_b[i];
    if (a && b) ++hh;
    else if (a) ++hm;
    else if (b) ++mh;
    else ++mm;
  }
  const double n = static_cast<double>(correct_a.size());
  return AgreementMatrix{hh / n, hm / n, mh / n, mm / n, correct_a.size()};
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    out << format_double(h.bin_edges[k]) << ',' << format_double(h.bin_edges[k + 1]) << ',' << h.counts[k] << '\n';
  }
}

void write_profile_csv(std::ostream& out, const std::map<int, DebutMaxStats>& profile) {
  out << "debut,mean_max,std_max,count\n";
  for (const auto& [debut, st] : profile) {
    out << debut << ',' << format_double(st.mean_max) << ',' << format_double(st.std_max) << ',' << st.count << '\n';
  }
}

void write_proportion_csv(std::ostream& out, const std::map<int, double>& proportion) {
  out << "debut,top_rank_fraction\n";
  for (const auto& [debut, f] : proportion) out << debut << ',' << format_double(f) << '\n';
}

void write_period_cdf_csv(std::ostream& out, const std::vector<PeriodCdf>& cdfs) {
  out << "period_start,period_end,value,cumulative_fraction\n";
  for (const auto& pc : cdfs) {
    const auto a = format_iso_date(pc.period.first);
    const auto b = format_iso_date(pc.period.last);
    for (std::size_t i = 0; i < pc.cdf.values.size(); ++i) {
      out << a << ',' << b << ',' << format_double(pc.cdf.values[i]) << ','
          << format_double(pc.cdf.cumulative_fraction[i]) << '\n';
    }
  }
}

}  // namespace popmir

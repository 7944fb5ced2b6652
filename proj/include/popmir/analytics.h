#pragma once

#include <array>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "popmir/chart.h"
#include "popmir/metrics.h"

namespace popmir {

/// Bin k counts edges[k] <= v < edges[k+1]; the last bin is closed on the right.
struct Histogram {
  std::vector<double> bin_edges;
  std::vector<long long> counts;
};

Histogram metric_histogram(std::span<const double> values, std::span<const double> bin_edges);

/// `bins` equal-width edges spanning [lo, hi].
std::vector<double> uniform_edges(double lo, double hi, int bins);

/// Empirical CDF: values sorted ascending, fraction(i) = (i+1)/n.
struct CumulativeDistribution {
  std::vector<double> values;
  std::vector<double> cumulative_fraction;
};

CumulativeDistribution empirical_cdf(std::vector<double> values);

/// Inclusive date interval.
struct DateInterval {
  Date first;
  Date last;
  bool contains(Date d) const { return first <= d && d <= last; }
};

struct PeriodCdf {
  DateInterval period;
  std::vector<std::size_t> members;  // indices into the history list
  CumulativeDistribution cdf;
};

/// A song belongs to a period only when its whole chart run lies inside it.
/// Periods must be disjoint.
std::vector<PeriodCdf> decadal_cdf(const std::vector<SongHistory>& histories,
                                   const std::vector<DateInterval>& periods, Metric metric);

struct DebutMaxStats {
  double mean_max = 0.0;
  double std_max = 0.0;  // population
  std::size_t count = 0;
};

std::map<int, DebutMaxStats> debut_vs_max_profile(std::span<const PopularityMetrics> metrics);

/// Per debut value, the fraction of songs whose Max equals max_rank.
std::map<int, double> top_rank_proportion_by_debut(std::span<const PopularityMetrics> metrics, int max_rank);

/// Joint correctness proportions of two classifiers on the same samples.
/// Layout follows the confusion table: rows = b (hit, miss), cols = a (hit, miss).
struct AgreementMatrix {
  double both_hit = 0.0;    // a hit, b hit
  double a_hit_b_miss = 0.0;
  double a_miss_b_hit = 0.0;
  double both_miss = 0.0;
  std::size_t total = 0;
};

AgreementMatrix group_agreement_matrix(const std::vector<bool>& correct_a, const std::vector<bool>& correct_b);

void write_histogram_csv(std::ostream& out, const Histogram& h);
void write_profile_csv(std::ostream& out, const std::map<int, DebutMaxStats>& profile);
void write_proportion_csv(std::ostream& out, const std::map<int, double>& proportion);
void write_period_cdf_csv(std::ostream& out, const std::vector<PeriodCdf>& cdfs);

}  // namespace popmir

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.h"
#include "popmir/error.h"
#include "popmir/metrics.h"

using namespace popmir;

namespace {

void expect_rel(double got, double want, double rel) {
  EXPECT_LE(std::abs(got - want), rel * std::max(1.0, std::abs(want))) << got << " vs " << want;
}

}  // namespace

TEST(Metrics, WorkedExample) {
  const std::vector<int> s{10, 50, 100, 60, 20};
  const auto m = compute_metrics(s);
  EXPECT_EQ(m.debut, 10);
  EXPECT_EQ(m.max, 100);
  EXPECT_DOUBLE_EQ(m.mean, 48.0);
  EXPECT_EQ(m.sum, 240);
  EXPECT_EQ(m.length, 5);
  EXPECT_NEAR(m.std, 31.87, 0.01);
  EXPECT_NEAR(m.skewness, 0.405, 0.001);
  EXPECT_NEAR(m.kurtosis, -1.056, 0.001);
  EXPECT_FALSE(m.degenerate);
}

TEST(Metrics, ConstantIsDegenerate) {
  const auto m = compute_metrics(std::vector<int>{5, 5, 5});
  EXPECT_EQ(m.debut, 5);
  EXPECT_EQ(m.max, 5);
  EXPECT_EQ(m.mean, 5.0);
  EXPECT_EQ(m.std, 0.0);
  EXPECT_EQ(m.skewness, 0.0);
  EXPECT_EQ(m.kurtosis, 0.0);
  EXPECT_TRUE(m.degenerate);
}

TEST(Metrics, SymmetricSequenceHasZeroSkew) {
  EXPECT_NEAR(compute_metrics(std::vector<int>{10, 50, 10, 50}).skewness, 0.0, 1e-12);
  EXPECT_NEAR(compute_metrics(std::vector<int>{1, 2, 3, 4, 5}).skewness, 0.0, 1e-12);
}

TEST(Metrics, TooShort) {
  EXPECT_THROW(compute_metrics(std::vector<int>{1, 2}), ValidationError);
  EXPECT_THROW(compute_metrics(std::vector<int>{}), ValidationError);
}

TEST(Metrics, MatchesBruteForceOnRandomSequences) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(3, 80), score(1, 100);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> s(static_cast<std::size_t>(len(rng)));
    for (int& v : s) v = score(rng);
    const auto m = compute_metrics(s);
    const auto o = oracle::brute_force_moments(s);
    EXPECT_EQ(m.debut, o.debut);
    EXPECT_EQ(m.max, o.max);
    EXPECT_EQ(m.length, o.length);
    EXPECT_EQ(static_cast<double>(m.sum), o.sum);
    expect_rel(m.mean, o.mean, 1e-12);
    expect_rel(m.std, o.std, 1e-9);
    expect_rel(m.skewness, o.skewness, 1e-9);
    expect_rel(m.kurtosis, o.kurtosis, 1e-9);
    EXPECT_LE(m.debut, m.max);
    EXPECT_GE(m.kurtosis, -2.0 - 1e-12);
  }
}

TEST(Metrics, Names) {
  for (Metric m : kAllMetrics) EXPECT_EQ(metric_from_name(metric_name(m)), m);
  EXPECT_FALSE(metric_from_name("debut").has_value());
  const auto pm = compute_metrics(std::vector<int>{3, 9, 6});
  EXPECT_EQ(pm.value(Metric::Max), 9.0);
  EXPECT_EQ(pm.value(Metric::Sum), 18.0);
}

TEST(Metrics, CsvLayout) {
  SongHistory h;
  h.song_id = "x";
  h.rank_scores = {10, 50, 100, 60, 20};
  h.weeks.resize(5);
  std::ostringstream out;
  write_metrics_csv(out, {h}, {compute_metrics(h)});
  const auto text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "song_id,debut,max,mean,std,length,sum,skewness,kurtosis,degenerate");
  EXPECT_NE(text.find("\nx,10,100,48,"), std::string::npos) << text;
}

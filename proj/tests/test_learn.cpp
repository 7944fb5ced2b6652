#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.h"
#include "popmir/error.h"
#include "popmir/learn.h"

using namespace popmir;

namespace {

LabeledDataset dataset(const std::vector<std::vector<double>>& rows, std::vector<int> labels) {
  LabeledDataset d;
  for (const auto& r : rows) d.features.push_row(r);
  d.labels = std::move(labels);
  return d;
}

LabeledDataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t dim, double shift) {
  std::normal_distribution<double> g;
  LabeledDataset d;
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i % 2 ? 1 : -1;
    for (double& v : row) v = g(rng) + shift * y;
    d.features.push_row(row);
    d.labels.push_back(y);
  }
  return d;
}

}  // namespace

TEST(Labels, MedianSplit) {
  EXPECT_EQ(median_split_labels(std::vector<double>{1, 2, 3, 4, 5}, 3), (std::vector<int>{-1, -1, -1, 1, 1}));
  EXPECT_EQ(median_split_labels(std::vector<double>{7, 7}, 7), (std::vector<int>{-1, -1}));
  const double t = median({10, 20, 30});
  EXPECT_EQ(t, 20.0);
  EXPECT_EQ(median_split_labels(std::vector<double>{15, 25}, t), (std::vector<int>{-1, 1}));
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), ValidationError);
}

TEST(Standardize, TrainingSetMomentsAndGuards) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(5.0, 3.0);
  Matrix x(0, 3);
  for (int i = 0; i < 100; ++i) x.push_row(std::vector<double>{g(rng), 42.0, g(rng) * 100});
  const auto s = standardize_fit(x);
  const auto z = standardize_apply(s, x);
  for (std::size_t c : {0u, 2u}) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < z.rows(); ++r) m += z(r, c);
    m /= z.rows();
    for (std::size_t r = 0; r < z.rows(); ++r) v += (z(r, c) - m) * (z(r, c) - m);
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(v / z.rows()), 1.0, 1e-9);
  }
  for (std::size_t r = 0; r < z.rows(); ++r) EXPECT_EQ(z(r, 1), 0.0);
  const auto at_mean = standardize_row(s, s.mean);
  for (double v : at_mean) EXPECT_NEAR(v, 0.0, 1e-12);
  EXPECT_THROW(standardize_fit(Matrix(1, 3)), ValidationError);
}

TEST(Svm, Xor) {
  const auto d = dataset({{0, 0}, {1, 1}, {0, 1}, {1, 0}}, {-1, -1, 1, 1});
  const auto m = train_svm_rbf(d, 10.0, 1.0);
  EXPECT_EQ(m.predict(d.features), d.labels);
  EXPECT_EQ(balanced_accuracy(m.predict(d.features), d.labels).balanced_accuracy, 1.0);
}

TEST(Svm, SeparableBlobs) {
  std::mt19937_64 rng(1);
  const auto d = random_dataset(rng, 80, 2, 4.0);
  const auto m = train_svm_rbf(d, 1.0, 0.5);
  EXPECT_EQ(balanced_accuracy(m.predict(d.features), d.labels).balanced_accuracy, 1.0);
}

TEST(Svm, KktOnRandomData) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const double C = std::ldexp(1.0, static_cast<int>(rng() % 5) - 2);
    const double gamma = std::ldexp(1.0, static_cast<int>(rng() % 5) - 3);
    const auto d = random_dataset(rng, 30 + rng() % 40, 1 + rng() % 4, 0.5);
    const auto m = train_svm_rbf(d, C, gamma);
    ASSERT_TRUE(m.stats.converged) << trial;
    std::vector<double> alpha(d.size(), 0.0);
    double balance = 0;
    for (std::size_t s = 0; s < m.support_indices.size(); ++s) {
      const double a = m.dual_coefficients[s];
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, C);
      alpha[m.support_indices[s]] = a;
      balance += a * m.support_labels[s];
      EXPECT_EQ(m.support_labels[s], d.labels[m.support_indices[s]]);
    }
    EXPECT_LE(std::abs(balance), 1e-6) << trial;
    const double tol = kSmoTolerance;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double yf = d.labels[i] * m.decision(d.features.row(i));
      if (alpha[i] == 0.0) {
        EXPECT_GE(yf, 1 - tol) << trial << " " << i;
      } else if (alpha[i] < C) {
        EXPECT_LE(std::abs(yf - 1), tol) << trial << " " << i;
      } else {
        EXPECT_LE(yf, 1 + tol) << trial << " " << i;
      }
    }
  }
}

TEST(Svm, ColumnOrderInvariant) {
  std::mt19937_64 rng(8);
  const auto d = random_dataset(rng, 60, 3, 0.7);
  auto swapped = d;
  for (std::size_t r = 0; r < d.size(); ++r) {
    swapped.features(r, 0) = d.features(r, 2);
    swapped.features(r, 2) = d.features(r, 0);
  }
  const auto a = train_svm_rbf(d, 2.0, 0.25).predict(d.features);
  const auto b = train_svm_rbf(swapped, 2.0, 0.25).predict(swapped.features);
  EXPECT_EQ(a, b);
  for (int y : a) EXPECT_TRUE(y == 1 || y == -1);
}

TEST(Svm, Errors) {
  const auto one_class = dataset({{0}, {1}, {2}}, {1, 1, 1});
  EXPECT_THROW(train_svm_rbf(one_class, 1, 1), ValidationError);
  const auto ok = dataset({{0}, {1}}, {-1, 1});
  EXPECT_THROW(train_svm_rbf(ok, 0, 1), ValidationError);
  EXPECT_THROW(train_svm_rbf(ok, 1, -1), ValidationError);
  const auto bad = dataset({{0}, {1}}, {0, 1});
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  const auto d = random_dataset(rng, 40, 3, 0.5);
  const auto z = standardize_apply(standardize_fit(d.features), d.features);
  for (int point = 0; point < 10; ++point) {
    std::vector<double> w{g(rng), g(rng), g(rng)};
    const double b = g(rng);
    const double l2 = 0.1 * point;
    const auto grad = logistic_gradient(z, d.labels, l2, w, b);
    const double h = 1e-5;
    for (std::size_t k = 0; k <= w.size(); ++k) {
      auto wp = w, wm = w;
      double bp = b, bm = b;
      if (k < w.size()) {
        wp[k] += h;
        wm[k] -= h;
      } else {
        bp += h;
        bm -= h;
      }
      const double fd = (logistic_objective(z, d.labels, l2, wp, bp) - logistic_objective(z, d.labels, l2, wm, bm)) / (2 * h);
      EXPECT_LE(std::abs(fd - grad[k]), 1e-4 * std::max(1.0, std::abs(grad[k]))) << point << " " << k;
    }
  }
}

TEST(Logistic, MirroredDataHasZeroBias) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  LabeledDataset d;
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> p{g(rng) + 1, g(rng)};
    d.features.push_row(p);
    d.labels.push_back(1);
    d.features.push_row(std::vector<double>{-p[0], -p[1]});
    d.labels.push_back(-1);
  }
  const auto m = train_logistic(d, 1.0);
  EXPECT_TRUE(m.stats.converged);
  EXPECT_NEAR(m.bias, 0.0, 1e-6);
}

TEST(Logistic, SeparableDataStaysFinite) {
  const auto d = dataset({{-2}, {-1}, {1}, {2}}, {-1, -1, 1, 1});
  const auto m = train_logistic(d, 1.0);
  EXPECT_TRUE(m.stats.converged);
  for (double w : m.weights) EXPECT_TRUE(std::isfinite(w));
  EXPECT_EQ(m.predict(d.features), d.labels);
}

TEST(BalancedAccuracy, Cases) {
  const std::vector<int> labels{1, 1, -1, -1};
  EXPECT_EQ(balanced_accuracy(labels, labels).balanced_accuracy, 1.0);
  EXPECT_EQ(balanced_accuracy(std::vector<int>{1, 1, 1, 1}, labels).balanced_accuracy, 0.5);
  // tp=40, fn=10, tn=30, fp=20
  std::vector<int> p, y;
  for (int i = 0; i < 40; ++i) p.push_back(1), y.push_back(1);
  for (int i = 0; i < 10; ++i) p.push_back(-1), y.push_back(1);
  for (int i = 0; i < 30; ++i) p.push_back(-1), y.push_back(-1);
  for (int i = 0; i < 20; ++i) p.push_back(1), y.push_back(-1);
  const auto r = balanced_accuracy(p, y);
  EXPECT_EQ(r.tp, 40);
  EXPECT_EQ(r.fn, 10);
  EXPECT_EQ(r.tn, 30);
  EXPECT_EQ(r.fp, 20);
  EXPECT_EQ(r.total(), 100);
  EXPECT_NEAR(r.balanced_accuracy, 0.7, 1e-15);
  EXPECT_EQ(r.balanced_accuracy, oracle::ba_from_counts(40, 10, 30, 20));
  EXPECT_THROW(balanced_accuracy(std::vector<int>{1, -1}, std::vector<int>{1, 1}), ValidationError);
  EXPECT_THROW(balanced_accuracy(std::vector<int>{1}, std::vector<int>{1, -1}), ValidationError);
}

TEST(BalancedAccuracy, RandomPredictionsAverageOneHalf) {
  std::mt19937_64 rng(99);
  double total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> p(50), y(50);
    for (int i = 0; i < 50; ++i) {
      y[i] = i % 2 ? 1 : -1;
      p[i] = rng() % 2 ? 1 : -1;
    }
    total += balanced_accuracy(p, y).balanced_accuracy;
  }
  EXPECT_NEAR(total / 1000, 0.5, 0.03);
}

TEST(Bootstrap, Cases) {
  std::vector<int> y(60);
  for (int i = 0; i < 60; ++i) y[i] = i % 2 ? 1 : -1;
  EXPECT_EQ(bootstrap_significance(y, y, 1000, 1), 0.0);
  EXPECT_EQ(bootstrap_significance(y, y, 1000, 77), 0.0);

  // predictions independent of labels with BA exactly 0.5
  std::vector<int> p(60);
  for (int i = 0; i < 60; ++i) p[i] = (i / 2) % 2 ? 1 : -1;
  ASSERT_EQ(balanced_accuracy(p, y).balanced_accuracy, 0.5);
  const double pv = bootstrap_significance(p, y, 1000, 5);
  EXPECT_NEAR(pv, 0.5, 0.1);
  EXPECT_EQ(pv, bootstrap_significance(p, y, 1000, 5));
}

TEST(GridSearch, SingleCell) {
  std::mt19937_64 rng(2);
  const auto tr = random_dataset(rng, 40, 2, 1.0), va = random_dataset(rng, 20, 2, 1.0);
  const auto r = grid_search(tr, va, std::vector<double>{3.0}, std::vector<double>{0.5});
  EXPECT_EQ(r.C, 3.0);
  EXPECT_EQ(r.gamma, 0.5);
  EXPECT_EQ(r.cell_ba.size(), 1u);
}

TEST(GridSearch, PlantedOptimum) {
  // Labels alternate over unit intervals of a 1-D feature. A near-zero gamma
  // leaves the kernel almost quadratic and cannot follow six sign changes; a
  // narrow one can.
  LabeledDataset tr, va;
  int i = 0;
  for (int k = -3; k < 3; ++k) {
    for (double off = 0.2; off < 0.85; off += 0.1, ++i) {
      auto& d = i % 2 ? va : tr;
      d.features.push_row(std::vector<double>{k + off});
      d.labels.push_back(k % 2 == 0 ? 1 : -1);
    }
  }
  const std::vector<double> cs{10.0}, gs{1e-6, 4.0};
  const auto res = grid_search(tr, va, cs, gs);
  EXPECT_EQ(res.gamma, 4.0);
  EXPECT_EQ(res.validation_ba, 1.0);
  EXPECT_LT(res.cell_ba[0], 0.8);
}

TEST(GridSearch, TiesPreferSmallerC) {
  std::mt19937_64 rng(3);
  const auto tr = random_dataset(rng, 40, 2, 5.0), va = random_dataset(rng, 20, 2, 5.0);
  const std::vector<double> cs{8.0, 2.0, 4.0}, gs{0.5};
  const auto res = grid_search(tr, va, cs, gs);
  ASSERT_EQ(*std::min_element(res.cell_ba.begin(), res.cell_ba.end()), 1.0);
  EXPECT_EQ(res.C, 2.0);
}

TEST(GridSearch, DefaultGrids) {
  const auto c = default_c_grid(), g = default_gamma_grid();
  EXPECT_EQ(c.size(), 11u);
  EXPECT_EQ(c.front(), std::ldexp(1.0, -5));
  EXPECT_EQ(c.back(), std::ldexp(1.0, 15));
  EXPECT_EQ(g.size(), 10u);
  EXPECT_EQ(g.front(), std::ldexp(1.0, -15));
  EXPECT_EQ(g.back(), 8.0);
}

TEST(Serialization, ModelRoundTrip) {
  std::mt19937_64 rng(6);
  const auto d = random_dataset(rng, 40, 3, 0.6);
  for (const auto& m : {train_svm_rbf(d, 1.0, 0.3), train_logistic(d, 0.5)}) {
    const auto back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    EXPECT_EQ(back.kind, m.kind);
    EXPECT_EQ(back.decision(d.features), m.decision(d.features));
  }
  EvalReport r;
  r.tp = 3;
  r.balanced_accuracy = 0.75;
  r.seed = 9;
  const auto j = report_to_json(r);
  EXPECT_EQ(j.at("tp"), 3);
  EXPECT_EQ(j.at("seed"), 9);
}

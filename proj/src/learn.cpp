#include "popmir/learn.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "popmir/error.h"
#include "popmir/parallel.h"

namespace popmir {

namespace {

constexpr double kTau = 1e-12;
constexpr std::size_t kFullKernelLimit = 4096;

void check_labels_match(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ValidationError("predictions and labels differ in length");
  if (a.empty()) throw ValidationError("empty prediction set");
}

double log_sigmoid(double z) {
  // log(1 / (1 + e^-z)) without overflow
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Kernel rows for the solver: the whole matrix for small problems, computed
/// on demand otherwise.
class KernelMatrix {
 public:
  KernelMatrix(const Matrix& x, double gamma) : x_(x), gamma_(gamma), n_(x.rows()) {
    if (n_ <= kFullKernelLimit) {
      full_.resize(n_ * n_);
      for (std::size_t i = 0; i < n_; ++i) {
        full_[i * n_ + i] = 1.0;
        for (std::size_t j = 0; j < i; ++j) {
          const double k = rbf_kernel(x.row(i), x.row(j), gamma);
          full_[i * n_ + j] = k;
          full_[j * n_ + i] = k;
        }
      }
    } else {
      scratch_.resize(n_);
    }
  }

  bool cached() const { return !full_.empty(); }

  std::span<const double> row(std::size_t i) {
    if (!full_.empty()) return {full_.data() + i * n_, n_};
    for (std::size_t j = 0; j < n_; ++j) scratch_[j] = rbf_kernel(x_.row(i), x_.row(j), gamma_);
    return scratch_;
  }

 private:
  const Matrix& x_;
  double gamma_;
  std::size_t n_;
  std::vector<double> full_;
  std::vector<double> scratch_;
};

struct DualSolution {
  std::vector<double> alpha;
  double rho = 0.0;
  SolverStats stats;
};

// Minimises 1/2 a'Qa - e'a subject to 0 <= a <= C, y'a = 0 with
// Q_ij = y_i y_j K(x_i, x_j).
DualSolution solve_dual(const Matrix& x, std::span<const int> y, double C, double gamma) {
  const std::size_t n = x.rows();
  KernelMatrix kernel(x, gamma);
  DualSolution sol;
  sol.alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);
  auto& a = sol.alpha;

  auto in_up = [&](std::size_t t) { return (y[t] > 0 && a[t] < C) || (y[t] < 0 && a[t] > 0.0); };
  auto in_low = [&](std::size_t t) { return (y[t] > 0 && a[t] > 0.0) || (y[t] < 0 && a[t] < C); };

  // Uncached kernel rows share one scratch buffer, so copy them out.
  std::vector<double> ki_buf;
  std::vector<double> kj_buf;
  auto fetch = [&](std::size_t r, std::vector<double>& buf) -> std::span<const double> {
    const auto row = kernel.row(r);
    if (kernel.cached()) return row;
    buf.assign(row.begin(), row.end());
    return buf;
  };

  int iter = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (;;) {
    double up_val = -std::numeric_limits<double>::infinity();
    double low_val = std::numeric_limits<double>::infinity();
    std::size_t i = n;
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      if (in_up(t) && v > up_val) {
        up_val = v;
        i = t;
      }
      if (in_low(t) && v < low_val) {
        low_val = v;
        j = t;
      }
    }
    gap = (i == n || j == n) ? 0.0 : up_val - low_val;
    if (gap < kSmoTolerance) {
      sol.stats.converged = true;
      break;
    }
    if (iter >= kSmoMaxIterations) break;
    ++iter;

    const auto ki = fetch(i, ki_buf);
    const double kij = ki[j];
    const double old_ai = a[i];
    const double old_aj = a[j];
    if (y[i] != y[j]) {
      // |phi_i - phi_j|^2 = K_ii + K_jj - 2 K_ij; the RBF diagonal is 1.
      double quad = 2.0 - 2.0 * kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0.0) {
        if (a[j] < 0.0) {
          a[j] = 0.0;
          a[i] = diff;
        }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = -diff;
      }
      if (diff > 0.0) {
        if (a[i] > C) {
          a[i] = C;
          a[j] = C - diff;
        }
      } else if (a[j] > C) {
        a[j] = C;
        a[i] = C + diff;
      }
    } else {
      double quad = 2.0 - 2.0 * kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > C) {
        if (a[i] > C) {
          a[i] = C;
          a[j] = sum - C;
        }
      } else if (a[j] < 0.0) {
        a[j] = 0.0;
        a[i] = sum;
      }
      if (sum > C) {
        if (a[j] > C) {
          a[j] = C;
          a[i] = sum - C;
        }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = sum;
      }
    }

    const double dai = a[i] - old_ai;
    const double daj = a[j] - old_aj;
    const auto kj = fetch(j, kj_buf);
    for (std::size_t t = 0; t < n; ++t) grad[t] += y[t] * (y[i] * ki[t] * dai + y[j] * kj[t] * daj);
  }

  // rho: mean of y_t G_t over free variables, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (a[t] >= C) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (a[t] <= 0.0) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  sol.stats.iterations = iter;
  sol.stats.final_gap = gap;
  return sol;
}

}  // namespace

void LabeledDataset::validate() const {
  if (features.rows() != labels.size()) throw ValidationError("dataset: feature rows and labels differ in count");
  if (!song_ids.empty() && song_ids.size() != labels.size()) throw ValidationError("dataset: song_ids length mismatch");
  if (!feature_names.empty() && feature_names.size() != features.cols()) {
    throw ValidationError("dataset: feature_names length mismatch");
  }
  for (int l : labels) {
    if (l != 1 && l != -1) throw ValidationError("dataset: labels must be -1 or +1");
  }
  for (double v : features.data()) {
    if (!std::isfinite(v)) throw ValidationError("dataset: non-finite feature value");
  }
}

bool LabeledDataset::has_both_classes() const {
  const bool pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool neg = std::find(labels.begin(), labels.end(), -1) != labels.end();
  return pos && neg;
}

std::vector<int> median_split_labels(std::span<const double> values, double threshold) {
  if (!std::isfinite(threshold)) throw ValidationError("median split threshold must be finite");
  std::vector<int> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [&](double v) { return v > threshold ? 1 : -1; });
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Standardization standardize_fit(const Matrix& train) {
  if (train.rows() < 2) throw ValidationError("standardisation needs at least 2 rows");
  Standardization s;
  const std::size_t d = train.cols();
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  const double n = static_cast<double>(train.rows());
  for (std::size_t r = 0; r < train.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += train(r, c);
  }
  for (double& m : s.mean) m /= n;
  for (std::size_t r = 0; r < train.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = train(r, c) - s.mean[c];
      s.std[c] += dv * dv;
    }
  }
  for (double& v : s.std) v = std::sqrt(v / n);
  return s;
}

std::vector<double> standardize_row(const Standardization& stats, std::span<const double> row) {
  if (row.size() != stats.mean.size()) throw ValidationError("standardize: column count mismatch");
  std::vector<double> out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) {
    out[c] = stats.std[c] > 0.0 ? (row[c] - stats.mean[c]) / stats.std[c] : 0.0;
  }
  return out;
}

Matrix standardize_apply(const Standardization& stats, const Matrix& features) {
  Matrix out(features.rows(), features.cols());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto z = standardize_row(stats, features.row(r));
    std::copy(z.begin(), z.end(), out.row(r).begin());
  }
  return out;
}

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

double TrainedModel::decision(std::span<const double> raw_row) const {
  const auto z = standardize_row(standardization, raw_row);
  if (kind == ModelKind::Logistic) {
    double acc = bias;
    for (std::size_t c = 0; c < z.size(); ++c) acc += weights[c] * z[c];
    return acc;
  }
  double acc = bias;
  for (std::size_t s = 0; s < dual_coefficients.size(); ++s) {
    acc += dual_coefficients[s] * support_labels[s] * rbf_kernel(support_vectors.row(s), z, gamma);
  }
  return acc;
}

int TrainedModel::predict(std::span<const double> raw_row) const { return decision(raw_row) > 0.0 ? 1 : -1; }

std::vector<double> TrainedModel::decision(const Matrix& raw) const {
  std::vector<double> out(raw.rows());
  for (std::size_t r = 0; r < raw.rows(); ++r) out[r] = decision(raw.row(r));
  return out;
}

std::vector<int> TrainedModel::predict(const Matrix& raw) const {
  std::vector<int> out(raw.rows());
  for (std::size_t r = 0; r < raw.rows(); ++r) out[r] = predict(raw.row(r));
  return out;
}

TrainedModel train_svm_rbf(const LabeledDataset& data, double C, double gamma) {
  data.validate();
  if (!(C > 0.0) || !(gamma > 0.0)) throw ValidationError("svm: C and gamma must be positive");
  if (!data.has_both_classes()) throw ValidationError("svm: training data has a single class");

  TrainedModel model;
  model.kind = ModelKind::SvmRbf;
  model.feature_names = data.feature_names;
  model.C = C;
  model.gamma = gamma;
  model.standardization = standardize_fit(data.features);
  const Matrix z = standardize_apply(model.standardization, data.features);

  const auto sol = solve_dual(z, data.labels, C, gamma);
  model.bias = -sol.rho;
  model.stats = sol.stats;
  model.support_vectors = Matrix(0, z.cols());
  for (std::size_t i = 0; i < sol.alpha.size(); ++i) {
    if (sol.alpha[i] > 0.0) {
      model.support_indices.push_back(i);
      model.dual_coefficients.push_back(sol.alpha[i]);
      model.support_labels.push_back(data.labels[i]);
      model.support_vectors.push_row(z.row(i));
    }
  }
  return model;
}

double logistic_objective(const Matrix& x, std::span<const int> y, double l2, std::span<const double> w, double b) {
  double ll = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double z = b;
    const auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) z += w[c] * row[c];
    ll += log_sigmoid(y[r] * z);
  }
  double norm2 = 0.0;
  for (double v : w) norm2 += v * v;
  return ll - 0.5 * l2 * norm2;
}

std::vector<double> logistic_gradient(const Matrix& x, std::span<const int> y, double l2, std::span<const double> w,
                                      double b) {
  const std::size_t d = x.cols();
  std::vector<double> g(d + 1, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double z = b;
    for (std::size_t c = 0; c < d; ++c) z += w[c] * row[c];
    // d/dz log sigma(y z) = y (1 - sigma(y z))
    const double coef = y[r] * (1.0 - sigmoid(y[r] * z));
    for (std::size_t c = 0; c < d; ++c) g[c] += coef * row[c];
    g[d] += coef;
  }
  for (std::size_t c = 0; c < d; ++c) g[c] -= l2 * w[c];
  return g;
}

TrainedModel train_logistic(const LabeledDataset& data, double l2) {
  data.validate();
  if (!(l2 >= 0.0)) throw ValidationError("logistic: l2 must be >= 0");
  if (!data.has_both_classes()) throw ValidationError("logistic: training data has a single class");

  TrainedModel model;
  model.kind = ModelKind::Logistic;
  model.feature_names = data.feature_names;
  model.l2 = l2;
  model.standardization = standardize_fit(data.features);
  const Matrix z = standardize_apply(model.standardization, data.features);
  const std::size_t d = z.cols();

  std::vector<double> w(d, 0.0);
  double b = 0.0;
  double f = logistic_objective(z, data.labels, l2, w, b);
  double step = 1.0;
  std::vector<double> trial_w(d);
  int iter = 0;
  double gnorm = 0.0;
  for (;; ++iter) {
    const auto g = logistic_gradient(z, data.labels, l2, w, b);
    double g2 = 0.0;
    for (double v : g) g2 += v * v;
    gnorm = std::sqrt(g2);
    if (gnorm < kLogisticGradientTolerance) {
      model.stats.converged = true;
      break;
    }
    if (iter >= kLogisticMaxIterations) break;

    // Armijo backtracking; the step is allowed to grow again after a success.
    step = std::min(step * 2.0, 1e6);
    double trial_f = 0.0;
    for (int halvings = 0;; ++halvings) {
      for (std::size_t c = 0; c < d; ++c) trial_w[c] = w[c] + step * g[c];
      const double trial_b = b + step * g[d];
      trial_f = logistic_objective(z, data.labels, l2, trial_w, trial_b);
      if (trial_f >= f + 0.5 * step * g2 || halvings > 60) {
        b = trial_b;
        break;
      }
      step *= 0.5;
    }
    if (trial_f <= f) {
      // no further progress possible in floating point
      w.swap(trial_w);
      f = trial_f;
      break;
    }
    w.swap(trial_w);
    f = trial_f;
  }
  model.weights = std::move(w);
  model.bias = b;
  model.stats.iterations = iter;
  model.stats.final_gap = gnorm;
  return model;
}

EvalReport balanced_accuracy(std::span<const int> predictions, std::span<const int> labels) {
  check_labels_match(predictions, labels);
  EvalReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pos = labels[i] > 0;
    const bool pred_pos = predictions[i] > 0;
    if (pos && pred_pos) ++r.tp;
    else if (pos) ++r.fn;
    else if (pred_pos) ++r.fp;
    else ++r.tn;
  }
  if (r.tp + r.fn == 0 || r.tn + r.fp == 0) throw ValidationError("balanced accuracy needs both classes in the labels");
  r.balanced_accuracy = 0.5 * (static_cast<double>(r.tp) / (r.tp + r.fn) + static_cast<double>(r.tn) / (r.tn + r.fp));
  return r;
}

double bootstrap_significance(std::span<const int> predictions, std::span<const int> labels, int n_resamples,
                              std::uint64_t seed) {
  check_labels_match(predictions, labels);
  if (n_resamples < 1) throw ValidationError("bootstrap needs at least one resample");
  balanced_accuracy(predictions, labels);  // validates both classes are present

  const std::size_t n = labels.size();
  std::mt19937_64 rng(seed);
  auto draw = [&] { return static_cast<std::size_t>((rng() >> 11) * 0x1.0p-53 * static_cast<double>(n)); };

  int at_or_below_chance = 0;
  for (int r = 0; r < n_resamples; ++r) {
    for (int attempt = 0;; ++attempt) {
      long long tp = 0, tn = 0, fp = 0, fn = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = draw();
        const bool pos = labels[i] > 0;
        const bool pred_pos = predictions[i] > 0;
        if (pos && pred_pos) ++tp;
        else if (pos) ++fn;
        else if (pred_pos) ++fp;
        else ++tn;
      }
      if (tp + fn > 0 && tn + fp > 0) {
        const double ba = 0.5 * (static_cast<double>(tp) / (tp + fn) + static_cast<double>(tn) / (tn + fp));
        if (ba <= 0.5) ++at_or_below_chance;
        break;
      }
      if (attempt > 10000) throw RuntimeError("bootstrap: could not draw a resample containing both classes");
    }
  }
  return static_cast<double>(at_or_below_chance) / n_resamples;
}

std::vector<double> default_c_grid() {
  std::vector<double> g;
  for (int e = -5; e <= 15; e += 2) g.push_back(std::ldexp(1.0, e));
  return g;
}

std::vector<double> default_gamma_grid() {
  std::vector<double> g;
  for (int e = -15; e <= 3; e += 2) g.push_back(std::ldexp(1.0, e));
  return g;
}

GridSearchResult grid_search(const LabeledDataset& train, const LabeledDataset& validation,
                             std::span<const double> c_grid, std::span<const double> gamma_grid, int jobs) {
  if (c_grid.empty() || gamma_grid.empty()) throw ValidationError("grid search needs non-empty grids");
  std::vector<double> cs(c_grid.begin(), c_grid.end());
  std::vector<double> gs(gamma_grid.begin(), gamma_grid.end());
  std::sort(cs.begin(), cs.end());
  std::sort(gs.begin(), gs.end());

  GridSearchResult res;
  res.cell_ba.assign(cs.size() * gs.size(), 0.0);
  parallel_for(res.cell_ba.size(), jobs, [&](std::size_t cell) {
    const auto model = train_svm_rbf(train, cs[cell / gs.size()], gs[cell % gs.size()]);
    res.cell_ba[cell] = balanced_accuracy(model.predict(validation.features), validation.labels).balanced_accuracy;
  });

  std::size_t best = 0;
  for (std::size_t cell = 1; cell < res.cell_ba.size(); ++cell) {
    if (res.cell_ba[cell] > res.cell_ba[best]) best = cell;
  }
  res.C = cs[best / gs.size()];
  res.gamma = gs[best % gs.size()];
  res.validation_ba = res.cell_ba[best];
  return res;
}

nlohmann::json model_to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["kind"] = m.kind == ModelKind::SvmRbf ? "svm_rbf" : "logistic";
  j["feature_names"] = m.feature_names;
  j["standardization"] = {{"mean", m.standardization.mean}, {"std", m.standardization.std}};
  j["bias"] = m.bias;
  j["solver"] = {{"iterations", m.stats.iterations}, {"converged", m.stats.converged}, {"final_gap", m.stats.final_gap}};
  if (m.kind == ModelKind::SvmRbf) {
    j["C"] = m.C;
    j["gamma"] = m.gamma;
    j["support_indices"] = m.support_indices;
    j["dual_coefficients"] = m.dual_coefficients;
    j["support_labels"] = m.support_labels;
    nlohmann::json sv = nlohmann::json::array();
    for (std::size_t r = 0; r < m.support_vectors.rows(); ++r) {
      const auto row = m.support_vectors.row(r);
      sv.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["support_vectors"] = std::move(sv);
  } else {
    j["l2"] = m.l2;
    j["weights"] = m.weights;
  }
  return j;
}

TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    TrainedModel m;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "svm_rbf") m.kind = ModelKind::SvmRbf;
    else if (kind == "logistic") m.kind = ModelKind::Logistic;
    else throw ValidationError("unknown model kind '" + kind + "'");
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.standardization.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.standardization.std = j.at("standardization").at("std").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    if (j.contains("solver")) {
      m.stats.iterations = j["solver"].value("iterations", 0);
      m.stats.converged = j["solver"].value("converged", false);
      m.stats.final_gap = j["solver"].value("final_gap", 0.0);
    }
    const std::size_t d = m.standardization.mean.size();
    if (m.standardization.std.size() != d) throw ValidationError("model standardization is inconsistent");
    if (m.kind == ModelKind::SvmRbf) {
      m.C = j.at("C").get<double>();
      m.gamma = j.at("gamma").get<double>();
      m.support_indices = j.at("support_indices").get<std::vector<std::size_t>>();
      m.dual_coefficients = j.at("dual_coefficients").get<std::vector<double>>();
      m.support_labels = j.at("support_labels").get<std::vector<int>>();
      m.support_vectors = Matrix(0, d);
      for (const auto& row : j.at("support_vectors")) m.support_vectors.push_row(row.get<std::vector<double>>());
      if (m.dual_coefficients.size() != m.support_vectors.rows() || m.support_labels.size() != m.support_vectors.rows()) {
        throw ValidationError("model support vector arrays differ in length");
      }
    } else {
      m.l2 = j.at("l2").get<double>();
      m.weights = j.at("weights").get<std::vector<double>>();
      if (m.weights.size() != d) throw ValidationError("model weight count does not match feature count");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad model json: ") + e.what());
  }
}

nlohmann::json report_to_json(const EvalReport& r) {
  return {{"tp", r.tp},
          {"tn", r.tn},
          {"fp", r.fp},
          {"fn", r.fn},
          {"balanced_accuracy", r.balanced_accuracy},
          {"p_value", r.p_value},
          {"significant", r.significant},
          {"seed", r.seed},
          {"n_resamples", r.n_resamples}};
}

}  // namespace popmir

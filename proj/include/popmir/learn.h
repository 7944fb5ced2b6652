#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "popmir/matrix.h"

namespace popmir {

/// Binary-labelled feature table. Labels are -1 / +1.
struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::string> song_ids;
  std::vector<std::string> feature_names;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  /// Throws ValidationError on shape mismatch, bad labels or non-finite features.
  void validate() const;
  bool has_both_classes() const;
};

/// value > threshold -> +1, otherwise -1 (ties go to the lower class).
std::vector<int> median_split_labels(std::span<const double> values, double threshold);

/// Median of a non-empty sample (mean of the two middle values for even n).
double median(std::vector<double> values);

struct Standardization {
  std::vector<double> mean;
  std::vector<double> std;  // population std; 0 marks a constant column
};

Standardization standardize_fit(const Matrix& train);
/// z-scores each column; columns with zero training std map to 0.
Matrix standardize_apply(const Standardization& stats, const Matrix& features);
std::vector<double> standardize_row(const Standardization& stats, std::span<const double> row);

enum class ModelKind { SvmRbf, Logistic };

struct SolverStats {
  int iterations = 0;
  bool converged = false;
  double final_gap = 0.0;  // SVM: max KKT violation; logistic: gradient norm
};

/// A fitted classifier plus the standardisation it was trained under.
/// Inputs to decision()/predict() are raw (unstandardised) feature rows.
struct TrainedModel {
  ModelKind kind = ModelKind::SvmRbf;
  std::vector<std::string> feature_names;
  Standardization standardization;

  // svm_rbf
  double C = 0.0;
  double gamma = 0.0;
  std::vector<std::size_t> support_indices;  // rows of the training set with alpha > 0
  std::vector<double> dual_coefficients;     // alpha_i for each support index
  std::vector<int> support_labels;
  Matrix support_vectors;                    // standardised rows

  // logistic
  double l2 = 0.0;
  std::vector<double> weights;

  double bias = 0.0;
  SolverStats stats;

  double decision(std::span<const double> raw_row) const;
  /// +1 when decision > 0, else -1.
  int predict(std::span<const double> raw_row) const;
  std::vector<int> predict(const Matrix& raw) const;
  std::vector<double> decision(const Matrix& raw) const;
};

inline constexpr double kSmoTolerance = 1e-3;
inline constexpr int kSmoMaxIterations = 10000;

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma);

/// Soft-margin RBF SVM solved by SMO with maximal-violating-pair selection.
/// Features are standardised internally. Throws ValidationError on
/// single-class data or non-positive C / gamma.
TrainedModel train_svm_rbf(const LabeledDataset& data, double C, double gamma);

/// Penalised log-likelihood sum_i log sigma(y_i (w.x_i + b)) - l2/2 |w|^2 on
/// already-standardised rows. The bias is not penalised.
double logistic_objective(const Matrix& x, std::span<const int> y, double l2, std::span<const double> w, double b);
/// Gradient of logistic_objective with respect to (w_0 .. w_{d-1}, b).
std::vector<double> logistic_gradient(const Matrix& x, std::span<const int> y, double l2,
                                      std::span<const double> w, double b);

inline constexpr double kLogisticGradientTolerance = 1e-6;
inline constexpr int kLogisticMaxIterations = 50000;

/// Gradient ascent with backtracking line search on standardised features.
TrainedModel train_logistic(const LabeledDataset& data, double l2);

struct EvalReport {
  long long tp = 0;
  long long tn = 0;
  long long fp = 0;
  long long fn = 0;
  double balanced_accuracy = 0.0;
  double p_value = 1.0;
  bool significant = false;
  std::uint64_t seed = 0;
  int n_resamples = 0;

  long long total() const { return tp + tn + fp + fn; }
};

/// Confusion counts (positive class = +1) and BA = (tp/(tp+fn) + tn/(tn+fp)) / 2.
/// Throws ValidationError if lengths differ or labels miss a class.
EvalReport balanced_accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Fraction of seeded bootstrap resamples of the test set whose BA is <= 0.5.
/// Resamples that lose a class are redrawn.
double bootstrap_significance(std::span<const int> predictions, std::span<const int> labels,
                              int n_resamples, std::uint64_t seed);

inline constexpr double kSignificanceLevel = 0.05;

/// C in {2^-5, 2^-3, ..., 2^15}.
std::vector<double> default_c_grid();
/// gamma in {2^-15, 2^-13, ..., 2^3}.
std::vector<double> default_gamma_grid();

struct GridSearchResult {
  double C = 0.0;
  double gamma = 0.0;
  double validation_ba = 0.0;
  std::vector<double> cell_ba;  // row-major over (C, gamma)
};

/// Exhaustive search for the (C, gamma) maximising validation BA. Ties keep
/// the smaller C, then the smaller gamma, whatever order the grids are given in.
GridSearchResult grid_search(const LabeledDataset& train, const LabeledDataset& validation,
                             std::span<const double> c_grid, std::span<const double> gamma_grid, int jobs = 1);

nlohmann::json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const EvalReport& report);

}  // namespace popmir

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "popmir/analytics.h"
#include "popmir/audio.h"
#include "popmir/bof.h"
#include "popmir/chart.h"
#include "popmir/complexity.h"
#include "popmir/learn.h"
#include "popmir/metrics.h"

namespace popmir {

/// Audio-derived inputs for one song.
struct SongFeatures {
  std::array<double, kComplexityDim> complexity{};
  Matrix mfcc_frames;  // empty when bag-of-frames features are not needed
};

using FeatureStore = std::map<std::string, SongFeatures>;

/// Loads the clip for a song id.
using AudioSource = std::function<AudioClip(const std::string& song_id)>;

/// Reads a `song_id,wav_path` manifest; relative paths resolve against the
/// manifest's directory.
std::map<std::string, std::filesystem::path> read_audio_manifest(const std::filesystem::path& path);

/// Extracts complexity features (and MFCC frames when `with_mfcc`) for each
/// song id, `jobs` songs at a time.
FeatureStore extract_features(const std::vector<std::string>& song_ids, const AudioSource& source, bool with_mfcc,
                              int jobs = 1);

/// Bag-of-frames histograms keyed by song id.
using BofStore = std::map<std::string, std::vector<double>>;

/// CSV: song_id, the 20 complexity features, then BoF1..BoFk when `bof` is
/// given (songs missing from it get empty cells).
void write_features_csv(std::ostream& out, const FeatureStore& features, const BofStore* bof = nullptr);

struct FeatureTable {
  FeatureStore features;
  BofStore bof;
};

/// Inverse of write_features_csv (MFCC frames are not stored).
FeatureTable read_features_csv(std::istream& in);

struct SplitFractions {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

/// Songs (indices into the history list) grouped by the period containing
/// their debut week. The chart period runs from the earliest to the latest
/// chart week; the cuts sit at train and train + validation of its length.
struct TemporalSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  Date period_start;
  Date period_end;
  Date train_cut;       // last day belonging to train
  Date validation_cut;  // last day belonging to validation
};

TemporalSplit temporal_split(const std::vector<SongHistory>& histories, const SplitFractions& fractions = {});

/// Columns fed to a classifier: whole groups, named single features, and
/// optionally the song's Debut score.
struct FeatureSet {
  std::string name;
  bool complexity = false;
  bool bof = false;
  std::vector<std::string> single_features;  // names from complexity_feature_names()
  bool debut = false;

  std::vector<std::string> column_names(std::size_t bof_k = kCodebookSize) const;
};

FeatureSet group_feature_set(const std::string& name);  // "complexity" or "bof"
FeatureSet single_feature_set(const std::string& feature_name);

struct ExperimentConfig {
  std::filesystem::path chart_path;
  std::filesystem::path audio_manifest;
  std::filesystem::path audio_dir;  // alternative to the manifest: <audio_dir>/<song_id>.wav
  std::filesystem::path output_dir;
  int max_rank = 100;
  int min_weeks = 3;
  SplitFractions split;
  std::vector<Metric> metrics{kAllMetrics.begin(), kAllMetrics.end()};
  std::vector<std::string> experiments{"single", "group", "combined"};
  std::vector<FeatureSet> custom_feature_sets;
  ModelKind classifier = ModelKind::SvmRbf;
  double logistic_l2 = 1.0;
  std::vector<double> c_grid = default_c_grid();
  std::vector<double> gamma_grid = default_gamma_grid();
  std::uint64_t codebook_seed = 1;
  std::uint64_t bootstrap_seed = 2;
  int n_resamples = 1000;
  int codebook_k = kCodebookSize;
  std::size_t codebook_subsample = 1;  // pool every n-th training frame
  int kmeans_max_iterations = 300;
  int jobs = 1;

  /// Throws ValidationError on inconsistent settings.
  void validate() const;
};

/// Unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
/// Reads a JSON config file; relative paths resolve against its directory.
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

/// Median of each metric over the training songs.
std::array<double, kAllMetrics.size()> train_medians(const std::vector<PopularityMetrics>& metrics,
                                                     const std::vector<std::size_t>& train);

/// k-means codebook over the pooled MFCC frames of the training songs only.
BofCodebook fit_train_codebook(const FeatureStore& features, const std::vector<std::string>& train_ids,
                               const ExperimentConfig& config);

/// Everything derived from the chart and the training split that the
/// classifiers need.
struct ExperimentData {
  std::vector<SongHistory> histories;
  std::vector<PopularityMetrics> metrics;
  TemporalSplit split;
  std::array<double, kAllMetrics.size()> medians{};
  std::optional<BofCodebook> codebook;
  FeatureStore features;
  BofStore bof;

  std::vector<std::string> ids(const std::vector<std::size_t>& songs) const;
};

/// Builds the split, training medians, and (when `need_bof`) the codebook and
/// per-song bag-of-frames histograms. Histories should already be filtered.
ExperimentData prepare_experiment(std::vector<SongHistory> histories, FeatureStore features,
                                  const ExperimentConfig& config, bool need_bof);

/// Rows for `songs` with columns per the feature set; labels split at
/// `threshold`. Throws ValidationError listing songs without features.
LabeledDataset build_labeled_dataset(const ExperimentData& data, const std::vector<std::size_t>& songs, Metric metric,
                                     const FeatureSet& feature_set, double threshold);

struct CellResult {
  std::string experiment;
  std::string feature_set;
  Metric metric = Metric::Debut;
  std::optional<EvalReport> report;  // absent when the cell could not be evaluated
  std::string error;
  double C = 0.0;
  double gamma = 0.0;
  double validation_ba = 0.0;
  std::vector<std::string> test_song_ids;
  std::vector<int> test_labels;
  std::vector<int> test_predictions;
};

/// Grid search on validation, fit on train, score on test.
CellResult evaluate_cell(const ExperimentData& data, const std::string& experiment, const FeatureSet& feature_set,
                         Metric metric, const ExperimentConfig& config);

struct ExperimentTable {
  std::string name;
  std::vector<std::string> row_names;
  std::vector<Metric> metrics;
  std::vector<CellResult> cells;  // row-major: row * metrics.size() + metric column

  const CellResult& cell(std::size_t row, std::size_t col) const { return cells[row * metrics.size() + col]; }
  const CellResult* find(const std::string& row, Metric m) const;
};

ExperimentTable run_feature_sets(const ExperimentData& data, const std::string& name,
                                 const std::vector<FeatureSet>& feature_sets, const ExperimentConfig& config);

/// One row per complexity feature, classifier trained on that feature alone.
ExperimentTable run_single_feature_experiment(const ExperimentData& data, const ExperimentConfig& config);
/// Rows: complexity, bof.
ExperimentTable run_group_experiment(const ExperimentData& data, const ExperimentConfig& config);
/// Rows: complexity+bof, complexity+bof+debut.
ExperimentTable run_combined_experiment(const ExperimentData& data, const ExperimentConfig& config);

struct GroupAgreement {
  Metric metric;
  AgreementMatrix matrix;
};
/// Joint correctness of the complexity and bof rows of a group table per
/// metric, plus the pooled matrix over all metrics (metric unset => pooled).
std::vector<GroupAgreement> group_agreement(const ExperimentTable& group_table, AgreementMatrix* pooled);

/// Writes <name>.csv per table (rows = feature sets, columns = metrics,
/// cells = BA), cells/<name>__<row>__<metric>.json, group_agreement.csv when
/// a group table is present, and manifest.json.
void emit_reports(const std::vector<ExperimentTable>& tables, const ExperimentData& data,
                  const ExperimentConfig& config, const std::filesystem::path& output_dir);

struct ExperimentOutcome {
  ExperimentData data;
  std::vector<ExperimentTable> tables;
};

/// Loads chart and audio per the config, runs the configured experiments and
/// writes the reports to config.output_dir.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

/// Same, with the chart given directly and audio supplied by `source`.
ExperimentOutcome run_experiment(const ExperimentConfig& config, const std::vector<ChartEntry>& chart,
                                 const AudioSource& source);

/// Runs the configured tables on prepared data without writing anything.
std::vector<ExperimentTable> run_tables(const ExperimentData& data, const ExperimentConfig& config);

/// True when any configured experiment needs bag-of-frames features.
bool needs_bof(const ExperimentConfig& config);

struct LeakageAudit {
  bool codebook_identical = false;
  bool medians_identical = false;
  bool ok() const { return codebook_identical && medians_identical; }
};

/// Recomputes the training medians and codebook after deleting every
/// test-split song from the inputs and compares bit for bit.
LeakageAudit audit_leakage(const ExperimentData& data, const ExperimentConfig& config);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace popmir

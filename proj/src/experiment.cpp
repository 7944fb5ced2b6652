#include "popmir/experiment.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "popmir/analytics.h"
#include "popmir/csv.h"
#include "popmir/dsp.h"
#include "popmir/error.h"
#include "popmir/parallel.h"

namespace popmir {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kExperimentNames{"single", "group", "combined", "custom"};
// Groups involving the compressed-domain features are out of scope; the
// manifest lists them so downstream tables keep their columns.
const std::vector<std::string> kNotRunFeatureSets{"mpeg", "complexity+mpeg", "bof+mpeg", "complexity+bof+mpeg"};

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::size_t complexity_index(const std::string& name) {
  const auto& names = complexity_feature_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ValidationError("unknown complexity feature: " + name);
  return static_cast<std::size_t>(it - names.begin());
}

const char* classifier_name(ModelKind k) { return k == ModelKind::SvmRbf ? "svm_rbf" : "logistic"; }

json feature_set_to_json(const FeatureSet& f) {
  json groups = json::array();
  if (f.complexity) groups.push_back("complexity");
  if (f.bof) groups.push_back("bof");
  return {{"name", f.name}, {"groups", groups}, {"features", f.single_features}, {"debut", f.debut}};
}

FeatureSet feature_set_from_json(const json& j) {
  FeatureSet f;
  f.name = j.at("name").get<std::string>();
  for (const auto& g : j.value("groups", json::array())) {
    const auto name = g.get<std::string>();
    if (name == "complexity") f.complexity = true;
    else if (name == "bof") f.bof = true;
    else throw ValidationError("unknown feature group: " + name);
  }
  f.single_features = j.value("features", std::vector<std::string>{});
  for (const auto& name : f.single_features) complexity_index(name);
  f.debut = j.value("debut", false);
  if (!f.complexity && !f.bof && f.single_features.empty() && !f.debut) {
    throw ValidationError("feature set '" + f.name + "' has no columns");
  }
  return f;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return item.key() == a; })) {
      throw ValidationError("unknown key in " + where + ": " + item.key());
    }
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeError("write failed: " + path.string());
}

// Rows [0, stride, 2*stride, ...) of every listed song, pooled in list order.
Matrix pooled_frames(const FeatureStore& features, const std::vector<std::string>& ids, std::size_t stride) {
  Matrix pooled;
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    const auto it = features.find(id);
    if (it == features.end() || it->second.mfcc_frames.empty()) {
      missing.push_back(id);
      continue;
    }
    const Matrix& m = it->second.mfcc_frames;
    for (std::size_t r = 0; r < m.rows(); r += stride) pooled.push_row(m.row(r));
  }
  if (!missing.empty()) throw ValidationError("no MFCC frames for songs: " + join(missing, ", "));
  return pooled;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

std::map<std::string, fs::path> read_audio_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open audio manifest " + path.string());
  const auto rows = read_csv(in);
  if (rows.empty() || rows.front().fields != std::vector<std::string>{"song_id", "wav_path"}) {
    throw ValidationError(path.string() + ": header must be song_id,wav_path");
  }
  std::map<std::string, fs::path> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.fields.size() != 2 || row.fields[0].empty() || row.fields[1].empty()) {
      throw ValidationError(path.string() + ": line " + std::to_string(row.line) + ": expected song_id,wav_path");
    }
    fs::path wav(row.fields[1]);
    if (wav.is_relative()) wav = path.parent_path() / wav;
    if (!out.emplace(row.fields[0], wav).second) {
      throw ValidationError(path.string() + ": line " + std::to_string(row.line) + ": duplicate song_id " +
                            row.fields[0]);
    }
  }
  return out;
}

FeatureStore extract_features(const std::vector<std::string>& song_ids, const AudioSource& source, bool with_mfcc,
                              int jobs) {
  std::vector<SongFeatures> slots(song_ids.size());
  parallel_for(song_ids.size(), jobs, [&](std::size_t i) {
    try {
      const AudioClip clip = source(song_ids[i]);
      slots[i].complexity = complexity_vector(clip).values;
      if (with_mfcc) slots[i].mfcc_frames = extract_mfcc_frames(clip);
    } catch (const ValidationError& e) {
      throw ValidationError("song " + song_ids[i] + ": " + e.what());
    } catch (const RuntimeError& e) {
      throw RuntimeError("song " + song_ids[i] + ": " + e.what());
    }
  });
  FeatureStore store;
  for (std::size_t i = 0; i < song_ids.size(); ++i) store[song_ids[i]] = std::move(slots[i]);
  return store;
}

void write_features_csv(std::ostream& out, const FeatureStore& features, const BofStore* bof) {
  std::size_t k = 0;
  if (bof) {
    for (const auto& [id, h] : *bof) k = std::max(k, h.size());
  }
  out << "song_id";
  for (const auto& name : complexity_feature_names()) out << ',' << name;
  for (std::size_t c = 1; c <= k; ++c) out << ",BoF" << c;
  out << '\n';
  for (const auto& [id, f] : features) {
    out << csv_escape(id);
    for (double v : f.complexity) out << ',' << format_double(v);
    if (k > 0) {
      const auto it = bof->find(id);
      for (std::size_t c = 0; c < k; ++c) {
        out << ',';
        if (it != bof->end() && c < it->second.size()) out << format_double(it->second[c]);
      }
    }
    out << '\n';
  }
}

FeatureTable read_features_csv(std::istream& in) {
  const auto rows = read_csv(in);
  const auto& names = complexity_feature_names();
  if (rows.empty() || rows.front().fields.size() < 1 + names.size() || rows.front().fields[0] != "song_id" ||
      !std::equal(names.begin(), names.end(), rows.front().fields.begin() + 1)) {
    throw ValidationError("features header must be song_id followed by the complexity feature names");
  }
  const auto& header = rows.front().fields;
  const std::size_t k = header.size() - 1 - names.size();
  for (std::size_t c = 0; c < k; ++c) {
    if (header[1 + names.size() + c] != "BoF" + std::to_string(c + 1)) {
      throw ValidationError("unexpected features column: " + header[1 + names.size() + c]);
    }
  }
  auto parse = [](const std::string& text, std::size_t line) {
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    } catch (const std::exception&) {
      throw ValidationError("line " + std::to_string(line) + ": not a number: '" + text + "'");
    }
  };
  FeatureTable t;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.size()) {
      throw ValidationError("line " + std::to_string(row.line) + ": expected " + std::to_string(header.size()) +
                            " fields");
    }
    SongFeatures f;
    for (std::size_t c = 0; c < names.size(); ++c) f.complexity[c] = parse(row.fields[1 + c], row.line);
    if (!t.features.emplace(row.fields[0], std::move(f)).second) {
      throw ValidationError("line " + std::to_string(row.line) + ": duplicate song_id " + row.fields[0]);
    }
    if (k > 0 && !row.fields[1 + names.size()].empty()) {
      std::vector<double> h(k);
      for (std::size_t c = 0; c < k; ++c) h[c] = parse(row.fields[1 + names.size() + c], row.line);
      t.bof[row.fields[0]] = std::move(h);
    }
  }
  return t;
}

TemporalSplit temporal_split(const std::vector<SongHistory>& histories, const SplitFractions& fractions) {
  if (histories.empty()) throw ValidationError("temporal split needs at least one song");
  if (fractions.train <= 0 || fractions.validation <= 0 || fractions.test <= 0 ||
      std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must be positive and sum to 1");
  }
  TemporalSplit s;
  s.period_start = histories.front().first_week();
  s.period_end = histories.front().last_week();
  for (const auto& h : histories) {
    if (h.weeks.empty()) throw ValidationError("song " + h.song_id + " has no chart weeks");
    s.period_start = std::min(s.period_start, h.first_week());
    s.period_end = std::max(s.period_end, h.last_week());
  }
  const double span = static_cast<double>((s.period_end - s.period_start).count());
  const double train_end = fractions.train * span;
  const double validation_end = (fractions.train + fractions.validation) * span;
  s.train_cut = s.period_start + std::chrono::days(static_cast<long>(std::floor(train_end)));
  s.validation_cut = s.period_start + std::chrono::days(static_cast<long>(std::floor(validation_end)));

  for (std::size_t i = 0; i < histories.size(); ++i) {
    const double offset = static_cast<double>((histories[i].first_week() - s.period_start).count());
    if (offset <= train_end) s.train.push_back(i);
    else if (offset <= validation_end) s.validation.push_back(i);
    else s.test.push_back(i);
  }
  return s;
}

std::vector<std::string> FeatureSet::column_names(std::size_t bof_k) const {
  std::vector<std::string> cols;
  if (complexity) {
    const auto& names = complexity_feature_names();
    cols.insert(cols.end(), names.begin(), names.end());
  }
  cols.insert(cols.end(), single_features.begin(), single_features.end());
  if (bof) {
    for (std::size_t c = 1; c <= bof_k; ++c) cols.push_back("BoF" + std::to_string(c));
  }
  if (debut) cols.push_back("Debut");
  return cols;
}

FeatureSet group_feature_set(const std::string& name) {
  FeatureSet f;
  f.name = name;
  if (name == "complexity") f.complexity = true;
  else if (name == "bof") f.bof = true;
  else throw ValidationError("unknown feature group: " + name);
  return f;
}

FeatureSet single_feature_set(const std::string& feature_name) {
  complexity_index(feature_name);
  FeatureSet f;
  f.name = feature_name;
  f.single_features = {feature_name};
  return f;
}

void ExperimentConfig::validate() const {
  if (split.train <= 0 || split.validation <= 0 || split.test <= 0 ||
      std::abs(split.train + split.validation + split.test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must be positive and sum to 1");
  }
  if (metrics.empty()) throw ValidationError("metric list is empty");
  if (std::set<Metric>(metrics.begin(), metrics.end()).size() != metrics.size()) {
    throw ValidationError("metric list has duplicates");
  }
  if (experiments.empty()) throw ValidationError("experiment list is empty");
  for (const auto& e : experiments) {
    if (std::find(kExperimentNames.begin(), kExperimentNames.end(), e) == kExperimentNames.end()) {
      throw ValidationError("unknown experiment: " + e);
    }
  }
  const bool custom = std::find(experiments.begin(), experiments.end(), "custom") != experiments.end();
  if (custom && custom_feature_sets.empty()) throw ValidationError("experiment 'custom' needs feature_sets");
  if (c_grid.empty() || gamma_grid.empty()) throw ValidationError("grids must be non-empty");
  for (double v : c_grid) {
    if (!(v > 0) || !std::isfinite(v)) throw ValidationError("C grid values must be positive");
  }
  for (double v : gamma_grid) {
    if (!(v > 0) || !std::isfinite(v)) throw ValidationError("gamma grid values must be positive");
  }
  if (!(logistic_l2 >= 0)) throw ValidationError("logistic_l2 must be >= 0");
  if (n_resamples < 1) throw ValidationError("n_resamples must be >= 1");
  if (codebook_k < 1) throw ValidationError("codebook k must be >= 1");
  if (codebook_subsample < 1) throw ValidationError("codebook subsample must be >= 1");
  if (kmeans_max_iterations < 1) throw ValidationError("kmeans max_iterations must be >= 1");
  if (max_rank < 1) throw ValidationError("max_rank must be >= 1");
  if (min_weeks < 3) throw ValidationError("min_weeks must be >= 3");
  if (jobs < 1) throw ValidationError("jobs must be >= 1");
}

ExperimentConfig config_from_json(const json& j) {
  try {
    check_keys(j,
               {"chart_path", "audio_manifest", "audio_dir", "output_dir", "max_rank", "min_weeks", "split", "metrics",
                "experiments", "feature_sets", "classifier", "logistic_l2", "c_grid", "gamma_grid", "seeds",
                "n_resamples", "codebook", "jobs"},
               "config");
    ExperimentConfig c;
    c.chart_path = j.value("chart_path", std::string{});
    c.audio_manifest = j.value("audio_manifest", std::string{});
    c.audio_dir = j.value("audio_dir", std::string{});
    c.output_dir = j.value("output_dir", std::string{});
    c.max_rank = j.value("max_rank", c.max_rank);
    c.min_weeks = j.value("min_weeks", c.min_weeks);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      check_keys(s, {"train", "validation", "test"}, "split");
      c.split.train = s.value("train", c.split.train);
      c.split.validation = s.value("validation", c.split.validation);
      c.split.test = s.value("test", c.split.test);
    }
    if (j.contains("metrics")) {
      c.metrics.clear();
      for (const auto& m : j.at("metrics")) {
        const auto name = m.get<std::string>();
        const auto metric = metric_from_name(name);
        if (!metric) throw ValidationError("unknown metric: " + name);
        c.metrics.push_back(*metric);
      }
    }
    if (j.contains("experiments")) c.experiments = j.at("experiments").get<std::vector<std::string>>();
    for (const auto& f : j.value("feature_sets", json::array())) c.custom_feature_sets.push_back(feature_set_from_json(f));
    if (j.contains("classifier")) {
      const auto k = j.at("classifier").get<std::string>();
      if (k == "svm_rbf") c.classifier = ModelKind::SvmRbf;
      else if (k == "logistic") c.classifier = ModelKind::Logistic;
      else throw ValidationError("unknown classifier: " + k);
    }
    c.logistic_l2 = j.value("logistic_l2", c.logistic_l2);
    if (j.contains("c_grid")) c.c_grid = j.at("c_grid").get<std::vector<double>>();
    if (j.contains("gamma_grid")) c.gamma_grid = j.at("gamma_grid").get<std::vector<double>>();
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      check_keys(s, {"codebook", "bootstrap"}, "seeds");
      c.codebook_seed = s.value("codebook", c.codebook_seed);
      c.bootstrap_seed = s.value("bootstrap", c.bootstrap_seed);
    }
    c.n_resamples = j.value("n_resamples", c.n_resamples);
    if (j.contains("codebook")) {
      const auto& cb = j.at("codebook");
      check_keys(cb, {"k", "subsample", "max_iterations"}, "codebook");
      c.codebook_k = cb.value("k", c.codebook_k);
      c.codebook_subsample = cb.value("subsample", c.codebook_subsample);
      c.kmeans_max_iterations = cb.value("max_iterations", c.kmeans_max_iterations);
    }
    c.jobs = j.value("jobs", c.jobs);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config: ") + e.what());
  }
}

json config_to_json(const ExperimentConfig& c) {
  std::vector<std::string> metrics;
  for (Metric m : c.metrics) metrics.emplace_back(metric_name(m));
  json sets = json::array();
  for (const auto& f : c.custom_feature_sets) sets.push_back(feature_set_to_json(f));
  return {{"chart_path", c.chart_path.generic_string()},
          {"audio_manifest", c.audio_manifest.generic_string()},
          {"audio_dir", c.audio_dir.generic_string()},
          {"output_dir", c.output_dir.generic_string()},
          {"max_rank", c.max_rank},
          {"min_weeks", c.min_weeks},
          {"split", {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}},
          {"metrics", metrics},
          {"experiments", c.experiments},
          {"feature_sets", sets},
          {"classifier", classifier_name(c.classifier)},
          {"logistic_l2", c.logistic_l2},
          {"c_grid", c.c_grid},
          {"gamma_grid", c.gamma_grid},
          {"seeds", {{"codebook", c.codebook_seed}, {"bootstrap", c.bootstrap_seed}}},
          {"n_resamples", c.n_resamples},
          {"codebook",
           {{"k", c.codebook_k}, {"subsample", c.codebook_subsample}, {"max_iterations", c.kmeans_max_iterations}}},
          {"jobs", c.jobs}};
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  auto c = config_from_json(j);
  const fs::path base = path.parent_path();
  for (fs::path* p : {&c.chart_path, &c.audio_manifest, &c.audio_dir, &c.output_dir}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return c;
}

std::array<double, kAllMetrics.size()> train_medians(const std::vector<PopularityMetrics>& metrics,
                                                     const std::vector<std::size_t>& train) {
  if (train.empty()) throw ValidationError("training split is empty");
  std::array<double, kAllMetrics.size()> out{};
  for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
    std::vector<double> values;
    values.reserve(train.size());
    for (std::size_t i : train) values.push_back(metrics.at(i).value(kAllMetrics[m]));
    out[m] = median(std::move(values));
  }
  return out;
}

BofCodebook fit_train_codebook(const FeatureStore& features, const std::vector<std::string>& train_ids,
                               const ExperimentConfig& config) {
  const Matrix pooled = pooled_frames(features, train_ids, config.codebook_subsample);
  return fit_codebook(pooled, config.codebook_k, config.codebook_seed, config.kmeans_max_iterations);
}

std::vector<std::string> ExperimentData::ids(const std::vector<std::size_t>& songs) const {
  std::vector<std::string> out;
  out.reserve(songs.size());
  for (std::size_t i : songs) out.push_back(histories.at(i).song_id);
  return out;
}

ExperimentData prepare_experiment(std::vector<SongHistory> histories, FeatureStore features,
                                  const ExperimentConfig& config, bool need_bof) {
  config.validate();
  ExperimentData d;
  d.histories = std::move(histories);
  d.features = std::move(features);
  d.metrics.reserve(d.histories.size());
  for (const auto& h : d.histories) d.metrics.push_back(compute_metrics(h));
  d.split = temporal_split(d.histories, config.split);
  d.medians = train_medians(d.metrics, d.split.train);
  if (!need_bof) return d;

  d.codebook = fit_train_codebook(d.features, d.ids(d.split.train), config);
  std::vector<std::string> ids;
  for (const auto& h : d.histories) {
    const auto it = d.features.find(h.song_id);
    if (it != d.features.end() && !it->second.mfcc_frames.empty()) ids.push_back(h.song_id);
  }
  std::vector<std::vector<double>> hist(ids.size());
  parallel_for(ids.size(), config.jobs,
               [&](std::size_t i) { hist[i] = bof_features(d.features.at(ids[i]).mfcc_frames, *d.codebook); });
  for (std::size_t i = 0; i < ids.size(); ++i) d.bof[ids[i]] = std::move(hist[i]);
  return d;
}

LabeledDataset build_labeled_dataset(const ExperimentData& data, const std::vector<std::size_t>& songs, Metric metric,
                                     const FeatureSet& feature_set, double threshold) {
  const std::size_t bof_k = data.codebook ? data.codebook->k() : kCodebookSize;
  LabeledDataset ds;
  ds.feature_names = feature_set.column_names(bof_k);
  std::vector<std::size_t> single;
  for (const auto& name : feature_set.single_features) single.push_back(complexity_index(name));

  std::vector<std::string> missing;
  std::vector<double> row;
  std::vector<double> values;
  for (std::size_t idx : songs) {
    const auto& id = data.histories.at(idx).song_id;
    const bool need_audio = feature_set.complexity || !single.empty() || feature_set.bof;
    const auto feat = data.features.find(id);
    const auto bof = data.bof.find(id);
    if ((need_audio && feat == data.features.end()) || (feature_set.bof && bof == data.bof.end())) {
      missing.push_back(id);
      continue;
    }
    row.clear();
    if (feature_set.complexity) row.insert(row.end(), feat->second.complexity.begin(), feat->second.complexity.end());
    for (std::size_t s : single) row.push_back(feat->second.complexity[s]);
    if (feature_set.bof) row.insert(row.end(), bof->second.begin(), bof->second.end());
    if (feature_set.debut) row.push_back(data.metrics.at(idx).debut);
    ds.features.push_row(row);
    ds.song_ids.push_back(id);
    values.push_back(data.metrics.at(idx).value(metric));
  }
  if (!missing.empty()) throw ValidationError("missing audio features for songs: " + join(missing, ", "));
  if (ds.features.empty()) ds.features = Matrix(0, ds.feature_names.size());
  ds.labels = median_split_labels(values, threshold);
  ds.validate();
  return ds;
}

CellResult evaluate_cell(const ExperimentData& data, const std::string& experiment, const FeatureSet& feature_set,
                         Metric metric, const ExperimentConfig& config) {
  CellResult cell;
  cell.experiment = experiment;
  cell.feature_set = feature_set.name;
  cell.metric = metric;
  const auto m = static_cast<std::size_t>(std::find(kAllMetrics.begin(), kAllMetrics.end(), metric) -
                                          kAllMetrics.begin());
  const double threshold = data.medians[m];

  const auto train = build_labeled_dataset(data, data.split.train, metric, feature_set, threshold);
  const auto test = build_labeled_dataset(data, data.split.test, metric, feature_set, threshold);
  cell.test_song_ids = test.song_ids;
  cell.test_labels = test.labels;
  if (!train.has_both_classes()) {
    cell.error = "training labels contain a single class";
    return cell;
  }
  if (!test.has_both_classes()) {
    cell.error = "test labels contain a single class";
    return cell;
  }

  TrainedModel model;
  if (config.classifier == ModelKind::SvmRbf) {
    const auto validation = build_labeled_dataset(data, data.split.validation, metric, feature_set, threshold);
    if (!validation.has_both_classes()) {
      cell.error = "validation labels contain a single class";
      return cell;
    }
    const auto best = grid_search(train, validation, config.c_grid, config.gamma_grid, 1);
    cell.C = best.C;
    cell.gamma = best.gamma;
    cell.validation_ba = best.validation_ba;
    model = train_svm_rbf(train, best.C, best.gamma);
  } else {
    model = train_logistic(train, config.logistic_l2);
  }

  cell.test_predictions = model.predict(test.features);
  EvalReport report = balanced_accuracy(cell.test_predictions, test.labels);
  report.seed = config.bootstrap_seed;
  report.n_resamples = config.n_resamples;
  report.p_value = bootstrap_significance(cell.test_predictions, test.labels, config.n_resamples, config.bootstrap_seed);
  report.significant = report.p_value < kSignificanceLevel;
  cell.report = report;
  return cell;
}

const CellResult* ExperimentTable::find(const std::string& row, Metric m) const {
  for (const auto& c : cells) {
    if (c.feature_set == row && c.metric == m) return &c;
  }
  return nullptr;
}

ExperimentTable run_feature_sets(const ExperimentData& data, const std::string& name,
                                 const std::vector<FeatureSet>& feature_sets, const ExperimentConfig& config) {
  ExperimentTable t;
  t.name = name;
  t.metrics = config.metrics;
  for (const auto& f : feature_sets) t.row_names.push_back(f.name);
  t.cells.resize(feature_sets.size() * t.metrics.size());
  parallel_for(t.cells.size(), config.jobs, [&](std::size_t i) {
    t.cells[i] = evaluate_cell(data, name, feature_sets[i / t.metrics.size()], t.metrics[i % t.metrics.size()], config);
  });
  return t;
}

ExperimentTable run_single_feature_experiment(const ExperimentData& data, const ExperimentConfig& config) {
  std::vector<FeatureSet> sets;
  for (const auto& name : complexity_feature_names()) sets.push_back(single_feature_set(name));
  return run_feature_sets(data, "single", sets, config);
}

ExperimentTable run_group_experiment(const ExperimentData& data, const ExperimentConfig& config) {
  return run_feature_sets(data, "group", {group_feature_set("complexity"), group_feature_set("bof")}, config);
}

ExperimentTable run_combined_experiment(const ExperimentData& data, const ExperimentConfig& config) {
  FeatureSet both;
  both.name = "complexity+bof";
  both.complexity = true;
  both.bof = true;
  FeatureSet with_debut = both;
  with_debut.name = "complexity+bof+debut";
  with_debut.debut = true;
  return run_feature_sets(data, "combined", {both, with_debut}, config);
}

std::vector<GroupAgreement> group_agreement(const ExperimentTable& group_table, AgreementMatrix* pooled) {
  std::vector<GroupAgreement> out;
  std::vector<bool> all_a;
  std::vector<bool> all_b;
  for (Metric m : group_table.metrics) {
    const CellResult* a = group_table.find("complexity", m);
    const CellResult* b = group_table.find("bof", m);
    if (!a || !b || !a->report || !b->report) continue;
    if (a->test_song_ids != b->test_song_ids) throw RuntimeError("group cells were scored on different songs");
    std::vector<bool> ca;
    std::vector<bool> cb;
    for (std::size_t i = 0; i < a->test_labels.size(); ++i) {
      ca.push_back(a->test_predictions[i] == a->test_labels[i]);
      cb.push_back(b->test_predictions[i] == b->test_labels[i]);
    }
    all_a.insert(all_a.end(), ca.begin(), ca.end());
    all_b.insert(all_b.end(), cb.begin(), cb.end());
    out.push_back({m, group_agreement_matrix(ca, cb)});
  }
  if (pooled) *pooled = all_a.empty() ? AgreementMatrix{} : group_agreement_matrix(all_a, all_b);
  return out;
}

namespace {

json cell_to_json(const CellResult& c) {
  json test = json::array();
  for (std::size_t i = 0; i < c.test_song_ids.size(); ++i) {
    json row = {{"song_id", c.test_song_ids[i]}, {"label", c.test_labels[i]}};
    if (i < c.test_predictions.size()) row["prediction"] = c.test_predictions[i];
    test.push_back(std::move(row));
  }
  return {{"experiment", c.experiment},
          {"feature_set", c.feature_set},
          {"metric", std::string(metric_name(c.metric))},
          {"report", c.report ? report_to_json(*c.report) : json(nullptr)},
          {"error", c.error},
          {"C", c.C},
          {"gamma", c.gamma},
          {"validation_ba", c.validation_ba},
          {"test", std::move(test)}};
}

std::string table_csv(const ExperimentTable& t) {
  std::ostringstream out;
  out << "feature_set";
  for (Metric m : t.metrics) out << ',' << metric_name(m);
  out << '\n';
  for (std::size_t r = 0; r < t.row_names.size(); ++r) {
    out << csv_escape(t.row_names[r]);
    for (std::size_t c = 0; c < t.metrics.size(); ++c) {
      out << ',';
      const auto& cell = t.cell(r, c);
      if (cell.report) out << format_double(cell.report->balanced_accuracy);
    }
    out << '\n';
  }
  return out.str();
}

std::string agreement_row(const std::string& label, const AgreementMatrix& a) {
  return label + ',' + format_double(a.both_hit) + ',' + format_double(a.a_hit_b_miss) + ',' +
         format_double(a.a_miss_b_hit) + ',' + format_double(a.both_miss) + ',' + std::to_string(a.total) + '\n';
}

}  // namespace

void emit_reports(const std::vector<ExperimentTable>& tables, const ExperimentData& data,
                  const ExperimentConfig& config, const fs::path& output_dir) {
  if (output_dir.empty()) throw ValidationError("output directory is not set");
  try {
    fs::create_directories(output_dir / "cells");
  } catch (const fs::filesystem_error& e) {
    throw RuntimeError("cannot create output directory: " + std::string(e.what()));
  }

  json table_names = json::array();
  for (const auto& t : tables) {
    table_names.push_back(t.name);
    write_text(output_dir / (t.name + ".csv"), table_csv(t));
    for (const auto& c : t.cells) {
      const auto file = t.name + "__" + c.feature_set + "__" + std::string(metric_name(c.metric)) + ".json";
      write_text(output_dir / "cells" / file, cell_to_json(c).dump(2) + "\n");
    }
    if (t.name == "group") {
      AgreementMatrix pooled;
      const auto per_metric = group_agreement(t, &pooled);
      std::string csv = "metric,both_hit,complexity_hit_bof_miss,complexity_miss_bof_hit,both_miss,total\n";
      for (const auto& g : per_metric) csv += agreement_row(std::string(metric_name(g.metric)), g.matrix);
      if (!per_metric.empty()) csv += agreement_row("pooled", pooled);
      write_text(output_dir / "group_agreement.csv", csv);
    }
  }

  std::ostringstream split_csv;
  split_csv << "song_id,split,first_week\n";
  auto emit_split = [&](const std::vector<std::size_t>& songs, const char* name) {
    for (std::size_t i : songs) {
      split_csv << csv_escape(data.histories[i].song_id) << ',' << name << ','
                << format_iso_date(data.histories[i].first_week()) << '\n';
    }
  };
  emit_split(data.split.train, "train");
  emit_split(data.split.validation, "validation");
  emit_split(data.split.test, "test");
  write_text(output_dir / "split.csv", split_csv.str());

  json medians = json::object();
  for (std::size_t m = 0; m < kAllMetrics.size(); ++m) medians[std::string(metric_name(kAllMetrics[m]))] = data.medians[m];

  json manifest = {
      {"versions", {{"popmir", kToolVersion}, {"fft", fft_library_version()}}},
      {"config", config_to_json(config)},
      {"seeds", {{"codebook", config.codebook_seed}, {"bootstrap", config.bootstrap_seed}}},
      {"tables", table_names},
      {"not_run", kNotRunFeatureSets},
      {"songs", data.histories.size()},
      {"split",
       {{"period_start", format_iso_date(data.split.period_start)},
        {"period_end", format_iso_date(data.split.period_end)},
        {"train_cut", format_iso_date(data.split.train_cut)},
        {"validation_cut", format_iso_date(data.split.validation_cut)},
        {"train", data.split.train.size()},
        {"validation", data.split.validation.size()},
        {"test", data.split.test.size()}}},
      {"train_medians", medians}};
  if (data.codebook) {
    manifest["codebook"] = {{"k", data.codebook->k()},
                            {"seed", data.codebook->seed},
                            {"iterations", data.codebook->iterations},
                            {"converged", data.codebook->converged},
                            {"inertia", data.codebook->inertia}};
    write_text(output_dir / "codebook.json", codebook_to_json(*data.codebook).dump(2) + "\n");
  }
  write_text(output_dir / "manifest.json", manifest.dump(2) + "\n");
}

bool needs_bof(const ExperimentConfig& config) {
  for (const auto& e : config.experiments) {
    if (e == "group" || e == "combined") return true;
    if (e == "custom") {
      for (const auto& f : config.custom_feature_sets) {
        if (f.bof) return true;
      }
    }
  }
  return false;
}

std::vector<ExperimentTable> run_tables(const ExperimentData& data, const ExperimentConfig& config) {
  std::vector<ExperimentTable> tables;
  for (const auto& e : config.experiments) {
    if (e == "single") tables.push_back(run_single_feature_experiment(data, config));
    else if (e == "group") tables.push_back(run_group_experiment(data, config));
    else if (e == "combined") tables.push_back(run_combined_experiment(data, config));
    else if (e == "custom") tables.push_back(run_feature_sets(data, "custom", config.custom_feature_sets, config));
  }
  return tables;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, const std::vector<ChartEntry>& chart,
                                 const AudioSource& source) {
  config.validate();
  auto histories = filter_min_weeks(assemble_histories(chart, config.max_rank), config.min_weeks);
  if (histories.empty()) throw ValidationError("no song charted for at least " + std::to_string(config.min_weeks) + " weeks");
  std::vector<std::string> ids;
  for (const auto& h : histories) ids.push_back(h.song_id);

  const bool bof = needs_bof(config);
  ExperimentOutcome out;
  out.data = prepare_experiment(std::move(histories), extract_features(ids, source, bof, config.jobs), config, bof);
  out.tables = run_tables(out.data, config);
  emit_reports(out.tables, out.data, config, config.output_dir);
  return out;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  config.validate();
  if (config.chart_path.empty()) throw ValidationError("config has no chart_path");
  if (config.output_dir.empty()) throw ValidationError("config has no output_dir");
  std::ifstream in(config.chart_path, std::ios::binary);
  if (!in) throw ValidationError("cannot open chart " + config.chart_path.string());
  const auto chart = parse_chart_csv(in, config.max_rank);

  std::map<std::string, fs::path> paths;
  if (!config.audio_manifest.empty()) {
    paths = read_audio_manifest(config.audio_manifest);
  } else if (!config.audio_dir.empty()) {
    for (const auto& e : chart) paths.emplace(e.song_id, config.audio_dir / (e.song_id + ".wav"));
  } else {
    throw ValidationError("config needs audio_manifest or audio_dir");
  }

  const auto histories = filter_min_weeks(assemble_histories(chart, config.max_rank), config.min_weeks);
  std::vector<std::string> missing;
  for (const auto& h : histories) {
    const auto it = paths.find(h.song_id);
    if (it == paths.end() || !fs::is_regular_file(it->second)) missing.push_back(h.song_id);
  }
  if (!missing.empty()) throw ValidationError("missing audio for songs: " + join(missing, ", "));

  return run_experiment(config, chart, [&](const std::string& id) { return read_wav_file(paths.at(id)); });
}

LeakageAudit audit_leakage(const ExperimentData& data, const ExperimentConfig& config) {
  const std::set<std::size_t> test(data.split.test.begin(), data.split.test.end());
  const std::set<std::size_t> train(data.split.train.begin(), data.split.train.end());

  // Rebuild the inputs without any test song, then redo the train-only fits.
  std::vector<SongHistory> kept;
  std::vector<bool> kept_is_train;
  FeatureStore store;
  for (std::size_t i = 0; i < data.histories.size(); ++i) {
    if (test.count(i)) continue;
    kept.push_back(data.histories[i]);
    kept_is_train.push_back(train.count(i) > 0);
    const auto it = data.features.find(data.histories[i].song_id);
    if (it != data.features.end()) store.emplace(it->first, it->second);
  }
  std::vector<PopularityMetrics> metrics;
  std::vector<std::size_t> train_idx;
  std::vector<std::string> train_ids;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    metrics.push_back(compute_metrics(kept[i]));
    if (kept_is_train[i]) {
      train_idx.push_back(i);
      train_ids.push_back(kept[i].song_id);
    }
  }

  LeakageAudit audit;
  const auto medians = train_medians(metrics, train_idx);
  audit.medians_identical = same_bits(medians, data.medians);
  if (data.codebook) {
    const auto cb = fit_train_codebook(store, train_ids, config);
    audit.codebook_identical = same_bits(cb.centroids.data(), data.codebook->centroids.data()) &&
                               cb.centroids.rows() == data.codebook->centroids.rows();
  } else {
    audit.codebook_identical = true;
  }
  return audit;
}

}  // namespace popmir

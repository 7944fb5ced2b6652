// popmir command-line front end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "popmir/analytics.h"
#include "popmir/bof.h"
#include "popmir/chart.h"
#include "popmir/csv.h"
#include "popmir/error.h"
#include "popmir/experiment.h"
#include "popmir/learn.h"
#include "popmir/metrics.h"
#include "popmir/parallel.h"
#include "popmir/synth.h"

using namespace popmir;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

ExperimentConfig base_config(const Globals& g) {
  ExperimentConfig c = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
  if (g.seed) {
    c.codebook_seed = *g.seed;
    c.bootstrap_seed = *g.seed;
  }
  if (g.jobs) c.jobs = *g.jobs;
  c.validate();
  return c;
}

fs::path require_path(const std::string& flag_value, const fs::path& from_config, const char* what) {
  if (!flag_value.empty()) return flag_value;
  if (!from_config.empty()) return from_config;
  throw ValidationError(std::string("no ") + what + " given (flag or config)");
}

std::vector<ChartEntry> load_chart(const fs::path& path, int max_rank) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open chart " + path.string());
  return parse_chart_csv(in, max_rank);
}

std::vector<SongHistory> load_histories(const fs::path& path, const ExperimentConfig& c) {
  return filter_min_weeks(assemble_histories(load_chart(path, c.max_rank), c.max_rank), c.min_weeks);
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path);
  out << text;
  if (!out) throw RuntimeError("write failed: " + path);
}

FeatureTable load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open features " + path);
  return read_features_csv(in);
}

Metric parse_metric(const std::string& name) {
  const auto m = metric_from_name(name);
  if (!m) throw ValidationError("unknown metric: " + name);
  return *m;
}

std::size_t metric_index(Metric m) {
  return static_cast<std::size_t>(std::find(kAllMetrics.begin(), kAllMetrics.end(), m) - kAllMetrics.begin());
}

std::map<std::string, fs::path> audio_paths(const std::string& manifest_flag, const ExperimentConfig& c) {
  return read_audio_manifest(require_path(manifest_flag, c.audio_manifest, "audio manifest"));
}

// Feature set whose columns reproduce `names` exactly.
FeatureSet feature_set_for_columns(const std::vector<std::string>& names) {
  FeatureSet f;
  f.name = "model";
  const auto& cx = complexity_feature_names();
  std::size_t bof_k = 0;
  for (const auto& n : names) {
    if (std::find(cx.begin(), cx.end(), n) != cx.end()) f.single_features.push_back(n);
    else if (n.rfind("BoF", 0) == 0) f.bof = true, ++bof_k;
    else if (n == "Debut") f.debut = true;
    else throw ValidationError("unknown model feature: " + n);
  }
  if (f.column_names(bof_k) != names) throw ValidationError("model feature order is not supported");
  return f;
}

ExperimentData data_from_tables(const fs::path& chart, const FeatureTable& table, const ExperimentConfig& c) {
  auto data = prepare_experiment(load_histories(chart, c), table.features, c, false);
  data.bof = table.bof;
  if (!data.bof.empty()) {
    // Only the codebook size matters when building datasets from stored histograms.
    BofCodebook cb;
    cb.centroids = Matrix(data.bof.begin()->second.size(), 1);
    data.codebook = cb;
  }
  return data;
}

const std::vector<std::size_t>& split_by_name(const TemporalSplit& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "validation") return s.validation;
  if (name == "test") return s.test;
  throw ValidationError("unknown split: " + name);
}

std::string format_ba(const json& report) {
  if (report.is_null()) return "  n/a ";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f%s", report.at("balanced_accuracy").get<double>(),
                report.at("significant").get<bool>() ? "*" : " ");
  return buf;
}

void print_report(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw ValidationError("no manifest.json in " + dir.string());
  const json manifest = json::parse(mf);
  const auto metrics = manifest.at("config").at("metrics").get<std::vector<std::string>>();
  for (const auto& table : manifest.at("tables")) {
    const auto name = table.get<std::string>();
    std::ifstream in(dir / (name + ".csv"));
    if (!in) throw ValidationError("missing " + name + ".csv");
    const auto rows = read_csv(in);
    std::cout << "== " << name << " (BA, * = p < " << kSignificanceLevel << ")\n";
    std::printf("%-22s", "feature_set");
    for (const auto& m : metrics) std::printf(" %9s", m.c_str());
    std::printf("\n");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row_name = rows[r].fields.at(0);
      std::printf("%-22s", row_name.c_str());
      for (const auto& m : metrics) {
        std::ifstream cell(dir / "cells" / (name + "__" + row_name + "__" + m + ".json"));
        std::printf(" %9s", cell ? format_ba(json::parse(cell).at("report")).c_str() : "-");
      }
      std::printf("\n");
    }
  }
  std::ifstream agreement(dir / "group_agreement.csv");
  if (agreement) {
    std::cout << "== group agreement (complexity vs bof correctness)\n";
    std::cout << agreement.rdbuf();
  }
  std::cout << "not run: ";
  for (const auto& n : manifest.at("not_run")) std::cout << n.get<std::string>() << ' ';
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chart popularity metrics, audio complexity features and hit prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  Globals g;
  app.add_option("--config", g.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed for k-means and bootstrap");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);

  std::string chart, out, out_dir, manifest, features, model_path, codebook_path, metric_name_arg, split_name = "test";
  std::optional<int> max_rank, min_weeks;

  auto add_chart_opts = [&](CLI::App* sub) {
    sub->add_option("--chart", chart, "chart CSV (week,rank,song_id,title,artist)");
    sub->add_option("--max-rank", max_rank, "chart depth");
    sub->add_option("--min-weeks", min_weeks, "drop songs with fewer chart weeks");
  };
  auto config_for = [&] {
    auto c = base_config(g);
    if (max_rank) c.max_rank = *max_rank;
    if (min_weeks) c.min_weeks = *min_weeks;
    c.validate();
    return c;
  };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a chart and write the filtered entries");
  add_chart_opts(ingest);
  ingest->add_option("-o,--out", out, "output CSV (default stdout)");
  ingest->callback([&] {
    const auto c = config_for();
    const auto path = require_path(chart, c.chart_path, "chart");
    const auto entries = load_chart(path, c.max_rank);
    const auto all = assemble_histories(entries, c.max_rank);
    const auto kept = filter_min_weeks(all, c.min_weeks);
    std::set<std::string> keep;
    for (const auto& h : kept) keep.insert(h.song_id);
    std::vector<ChartEntry> filtered;
    for (const auto& e : entries) {
      if (keep.count(e.song_id)) filtered.push_back(e);
    }
    std::ostringstream csv;
    write_chart_csv(csv, filtered);
    emit(out, csv.str());
    std::cerr << entries.size() << " entries, " << all.size() << " songs, " << kept.size() << " with >= "
              << c.min_weeks << " weeks\n";
  });

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "popularity metrics per song");
  add_chart_opts(metrics_cmd);
  metrics_cmd->add_option("-o,--out", out, "output CSV (default stdout)");
  metrics_cmd->callback([&] {
    const auto c = config_for();
    const auto histories = load_histories(require_path(chart, c.chart_path, "chart"), c);
    std::vector<PopularityMetrics> m;
    for (const auto& h : histories) m.push_back(compute_metrics(h));
    std::ostringstream csv;
    write_metrics_csv(csv, histories, m);
    emit(out, csv.str());
  });

  // analyze
  auto* analyze = app.add_subcommand("analyze", "histograms, debut/max profile and per-period CDFs");
  add_chart_opts(analyze);
  int bins = 20;
  std::vector<std::string> periods;
  analyze->add_option("--out-dir", out_dir, "output directory")->required();
  analyze->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);
  analyze->add_option("--period", periods, "FIRST:LAST date interval (repeatable; default calendar decades)");
  analyze->callback([&] {
    const auto c = config_for();
    const auto histories = load_histories(require_path(chart, c.chart_path, "chart"), c);
    if (histories.empty()) throw ValidationError("no songs left after filtering");
    std::vector<PopularityMetrics> m;
    for (const auto& h : histories) m.push_back(compute_metrics(h));
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    auto write = [&](const std::string& name, auto&& fn) {
      std::ostringstream s;
      fn(s);
      emit((dir / name).string(), s.str());
    };
    for (Metric metric : kAllMetrics) {
      std::vector<double> values;
      for (const auto& x : m) values.push_back(x.value(metric));
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      const double top = *hi > *lo ? *hi : *lo + 1.0;
      const auto h = metric_histogram(values, uniform_edges(*lo, top, bins));
      write("histogram_" + std::string(popmir::metric_name(metric)) + ".csv",
            [&](std::ostream& s) { write_histogram_csv(s, h); });
    }
    write("debut_max_profile.csv", [&](std::ostream& s) { write_profile_csv(s, debut_vs_max_profile(m)); });
    write("top_rank_by_debut.csv",
          [&](std::ostream& s) { write_proportion_csv(s, top_rank_proportion_by_debut(m, c.max_rank)); });

    std::vector<DateInterval> intervals;
    for (const auto& p : periods) {
      const auto colon = p.find(':');
      if (colon == std::string::npos) throw ValidationError("period must be FIRST:LAST, got " + p);
      intervals.push_back({parse_iso_date(p.substr(0, colon)), parse_iso_date(p.substr(colon + 1))});
    }
    if (intervals.empty()) {
      Date first = histories.front().first_week(), last = histories.front().last_week();
      for (const auto& h : histories) {
        first = std::min(first, h.first_week());
        last = std::max(last, h.last_week());
      }
      const int y0 = static_cast<int>(std::chrono::year_month_day(first).year()) / 10 * 10;
      const int y1 = static_cast<int>(std::chrono::year_month_day(last).year());
      for (int y = y0; y <= y1; y += 10) {
        intervals.push_back({Date{std::chrono::year{y} / 1 / 1}, Date{std::chrono::year{y + 9} / 12 / 31}});
      }
    }
    for (Metric metric : kAllMetrics) {
      const auto cdfs = decadal_cdf(histories, intervals, metric);
      write("period_cdf_" + std::string(popmir::metric_name(metric)) + ".csv",
            [&](std::ostream& s) { write_period_cdf_csv(s, cdfs); });
    }
    std::cerr << "wrote analysis for " << histories.size() << " songs to " << dir.string() << "\n";
  });

  // extract
  auto* extract = app.add_subcommand("extract", "complexity features (and BoF histograms) per song");
  extract->add_option("--manifest", manifest, "CSV song_id,wav_path");
  extract->add_option("--codebook", codebook_path, "codebook JSON; adds BoF columns");
  extract->add_option("-o,--out", out, "output CSV (default stdout)");
  extract->callback([&] {
    const auto c = config_for();
    const auto paths = audio_paths(manifest, c);
    std::vector<std::string> ids;
    for (const auto& [id, p] : paths) ids.push_back(id);
    std::optional<BofCodebook> cb;
    if (!codebook_path.empty()) {
      std::ifstream in(codebook_path);
      if (!in) throw ValidationError("cannot open codebook " + codebook_path);
      cb = codebook_from_json(json::parse(in));
    }
    auto store = extract_features(ids, [&](const std::string& id) { return read_wav_file(paths.at(id)); },
                                  cb.has_value(), c.jobs);
    BofStore bof;
    if (cb) {
      for (const auto& [id, f] : store) bof[id] = bof_features(f.mfcc_frames, *cb);
    }
    std::ostringstream csv;
    write_features_csv(csv, store, cb ? &bof : nullptr);
    emit(out, csv.str());
  });

  // codebook
  std::optional<int> k;
  std::optional<std::size_t> subsample;
  auto* codebook = app.add_subcommand("codebook", "fit the k-means MFCC codebook");
  codebook->add_option("--manifest", manifest, "CSV song_id,wav_path");
  codebook->add_option("--chart", chart, "restrict to the training split of this chart");
  codebook->add_option("--k", k, "codebook size")->check(CLI::PositiveNumber);
  codebook->add_option("--subsample", subsample, "use every n-th frame")->check(CLI::PositiveNumber);
  codebook->add_option("-o,--out", out, "output JSON (default stdout)");
  codebook->callback([&] {
    auto c = config_for();
    if (k) c.codebook_k = *k;
    if (subsample) c.codebook_subsample = *subsample;
    const auto paths = audio_paths(manifest, c);
    std::vector<std::string> ids;
    const fs::path chart_path = chart.empty() ? c.chart_path : fs::path(chart);
    if (!chart_path.empty()) {
      const auto histories = load_histories(chart_path, c);
      for (std::size_t i : temporal_split(histories, c.split).train) ids.push_back(histories[i].song_id);
    } else {
      for (const auto& [id, p] : paths) ids.push_back(id);
    }
    FeatureStore store;
    std::vector<Matrix> frames(ids.size());
    parallel_for(ids.size(), c.jobs, [&](std::size_t i) {
      const auto it = paths.find(ids[i]);
      if (it == paths.end()) throw ValidationError("no audio for song " + ids[i]);
      frames[i] = extract_mfcc_frames(read_wav_file(it->second));
    });
    for (std::size_t i = 0; i < ids.size(); ++i) store[ids[i]].mfcc_frames = std::move(frames[i]);
    const auto cb = fit_train_codebook(store, ids, c);
    emit(out, codebook_to_json(cb).dump(2) + "\n");
    std::cerr << "codebook: k=" << cb.k() << " iterations=" << cb.iterations << " inertia=" << cb.inertia << "\n";
  });

  // train
  std::vector<std::string> groups, single;
  bool debut = false;
  std::string classifier = "svm_rbf";
  std::optional<double> C, gamma, l2;
  auto* train = app.add_subcommand("train", "fit a classifier on the training split");
  add_chart_opts(train);
  train->add_option("--features", features, "features CSV from extract")->required();
  train->add_option("--metric", metric_name_arg, "popularity metric to predict")->required();
  train->add_option("--group", groups, "feature group: complexity or bof (repeatable)");
  train->add_option("--feature", single, "single complexity feature (repeatable)");
  train->add_flag("--debut", debut, "add the Debut score as a feature");
  train->add_option("--classifier", classifier, "svm_rbf or logistic")->check(CLI::IsMember({"svm_rbf", "logistic"}));
  train->add_option("--C", C, "SVM C (grid search when C and gamma are absent)");
  train->add_option("--gamma", gamma, "SVM RBF gamma");
  train->add_option("--l2", l2, "logistic L2 penalty");
  train->add_option("-o,--out", out, "model JSON (default stdout)");
  train->callback([&] {
    const auto c = config_for();
    const Metric metric = parse_metric(metric_name_arg);
    FeatureSet fs_;
    fs_.name = "cli";
    for (const auto& grp : groups) {
      const auto f = group_feature_set(grp);
      fs_.complexity |= f.complexity;
      fs_.bof |= f.bof;
    }
    fs_.single_features = single;
    fs_.debut = debut;
    if (fs_.column_names().empty()) throw ValidationError("no features selected (--group/--feature/--debut)");
    if (C.has_value() != gamma.has_value()) throw ValidationError("give both --C and --gamma, or neither");

    const auto data = data_from_tables(require_path(chart, c.chart_path, "chart"), load_features(features), c);
    const double threshold = data.medians[metric_index(metric)];
    const auto train_set = build_labeled_dataset(data, data.split.train, metric, fs_, threshold);
    TrainedModel model;
    if (classifier == "logistic") {
      model = train_logistic(train_set, l2.value_or(c.logistic_l2));
    } else if (C) {
      model = train_svm_rbf(train_set, *C, *gamma);
    } else {
      const auto validation = build_labeled_dataset(data, data.split.validation, metric, fs_, threshold);
      const auto best = grid_search(train_set, validation, c.c_grid, c.gamma_grid, c.jobs);
      std::cerr << "grid search: C=" << best.C << " gamma=" << best.gamma << " validation BA=" << best.validation_ba
                << "\n";
      model = train_svm_rbf(train_set, best.C, best.gamma);
    }
    auto j = model_to_json(model);
    j["metric"] = std::string(popmir::metric_name(metric));
    j["threshold"] = threshold;
    emit(out, j.dump(2) + "\n");
  });

  // evaluate
  int resamples = 1000;
  auto* evaluate = app.add_subcommand("evaluate", "score a model on a split with bootstrap significance");
  add_chart_opts(evaluate);
  evaluate->add_option("--model", model_path, "model JSON from train")->required();
  evaluate->add_option("--features", features, "features CSV from extract")->required();
  evaluate->add_option("--metric", metric_name_arg, "metric (default: the model's)");
  evaluate->add_option("--split", split_name, "train, validation or test");
  evaluate->add_option("--resamples", resamples, "bootstrap resamples")->check(CLI::PositiveNumber);
  evaluate->add_option("-o,--out", out, "report JSON (default stdout)");
  evaluate->callback([&] {
    const auto c = config_for();
    std::ifstream in(model_path);
    if (!in) throw ValidationError("cannot open model " + model_path);
    json mj;
    try {
      mj = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(model_path + ": " + e.what());
    }
    const auto model = model_from_json(mj);
    std::string mname = metric_name_arg;
    if (mname.empty()) mname = mj.value("metric", std::string{});
    const Metric metric = parse_metric(mname);
    const auto data = data_from_tables(require_path(chart, c.chart_path, "chart"), load_features(features), c);
    const auto ds = build_labeled_dataset(data, split_by_name(data.split, split_name), metric,
                                          feature_set_for_columns(model.feature_names),
                                          data.medians[metric_index(metric)]);
    const auto pred = model.predict(ds.features);
    auto report = balanced_accuracy(pred, ds.labels);
    report.seed = c.bootstrap_seed;
    report.n_resamples = resamples;
    report.p_value = bootstrap_significance(pred, ds.labels, resamples, c.bootstrap_seed);
    report.significant = report.p_value < kSignificanceLevel;
    auto j = report_to_json(report);
    j["metric"] = mname;
    j["split"] = split_name;
    emit(out, j.dump(2) + "\n");
  });

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run the configured experiments and write reports");
  experiment->add_option("--out", out_dir, "output directory (overrides the config)");
  experiment->callback([&] {
    if (g.config_path.empty()) throw ValidationError("experiment needs --config");
    auto c = base_config(g);
    if (!out_dir.empty()) c.output_dir = out_dir;
    const auto outcome = run_experiment(c);
    std::cerr << "songs: " << outcome.data.histories.size() << " (train " << outcome.data.split.train.size()
              << ", validation " << outcome.data.split.validation.size() << ", test "
              << outcome.data.split.test.size() << ")\n";
    print_report(c.output_dir);
  });

  // report
  auto* report = app.add_subcommand("report", "print the tables of an experiment output directory");
  report->add_option("--dir", out_dir, "experiment output directory")->required();
  report->callback([&] { print_report(out_dir); });

  // synth
  CorpusSpec corpus_spec;
  auto* synth = app.add_subcommand("synth", "write a synthetic demo corpus (audio, manifest, chart, config)");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--songs", corpus_spec.songs, "number of songs")->check(CLI::PositiveNumber);
  synth->add_option("--seconds", corpus_spec.seconds, "clip length");
  synth->add_option("--debut-weeks", corpus_spec.debut_weeks, "weeks over which debuts are spread");
  synth->callback([&] {
    if (g.seed) corpus_spec.seed = *g.seed;
    const auto corpus = synthetic_corpus(corpus_spec);
    const fs::path dir(out_dir);
    fs::create_directories(dir / "audio");
    std::vector<double> rate;  // chord changes per second
    std::ostringstream man;
    man << "song_id,wav_path\n";
    for (std::size_t i = 0; i < corpus.song_ids.size(); ++i) {
      const auto rel = "audio/" + corpus.song_ids[i] + ".wav";
      write_wav_file(dir / rel, chord_progression_clip(corpus.clips[i]));
      man << corpus.song_ids[i] << ',' << rel << '\n';
      rate.push_back(1.0 / corpus.clips[i].change_seconds);
    }
    emit((dir / "manifest.csv").string(), man.str());
    const auto lengths = lengths_from_scores(rate, 3, 40);
    std::ostringstream csv;
    write_chart_csv(csv, planted_chart(planted_songs(corpus, lengths)));
    emit((dir / "chart.csv").string(), csv.str());
    ExperimentConfig c;
    c.chart_path = "chart.csv";
    c.audio_manifest = "manifest.csv";
    c.output_dir = "results";
    c.codebook_subsample = 10;
    emit((dir / "config.json").string(), config_to_json(c).dump(2) + "\n");
    std::cerr << "wrote " << corpus.song_ids.size() << " songs to " << dir.string() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

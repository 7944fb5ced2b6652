// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "../oracles.h"
#include "popmir/analytics.h"
#include "popmir/audio.h"
#include "popmir/bof.h"
#include "popmir/chart.h"
#include "popmir/complexity.h"
#include "popmir/dsp.h"
#include "popmir/error.h"
#include "popmir/experiment.h"
#include "popmir/learn.h"
#include "popmir/metrics.h"
#include "popmir/synth.h"

using namespace popmir;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int id, const char* title, bool ok, const std::string& detail) {
  std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

// Runs a criterion, turning an escaped exception into a failure line.
void criterion(int id, const char* title, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(id, title, ok, detail);
  } catch (const std::exception& e) {
    report(id, title, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------------------

std::pair<bool, std::string> metric_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> len(3, 80), score(1, 100);
  double worst = 0;
  bool exact = true;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> s(static_cast<std::size_t>(len(rng)));
    for (int& v : s) v = score(rng);
    const auto m = compute_metrics(s);
    const auto o = oracle::brute_force_moments(s);
    exact = exact && m.debut == o.debut && m.max == o.max && m.length == o.length &&
            static_cast<double>(m.sum) == o.sum;
    for (auto [a, b] : {std::pair{m.mean, o.mean}, {m.std, o.std}, {m.skewness, o.skewness}, {m.kurtosis, o.kurtosis}}) {
      worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
    }
  }
  const double t = seconds_since(t0);
  return {exact && worst <= 1e-9 && t < 5.0, fmt("max rel err %.2e, %.3f s", worst, t)};
}

std::pair<bool, std::string> rank_endpoints() {
  const bool ok = rank_score(1, 100) == 100 && rank_score(100, 100) == 1;
  const auto h = assemble_histories(
      parse_chart_csv("week,rank,song_id,title,artist\n2000-01-01,1,a,A,X\n2000-01-01,100,b,B,Y\n", 100), 100);
  const bool via_chart = h[0].rank_scores[0] == 100 && h[1].rank_scores[0] == 1;
  return {ok && via_chart, fmt("rank 1 -> %d, rank 100 -> %d", rank_score(1, 100), rank_score(100, 100))};
}

std::pair<bool, std::string> jsd_properties() {
  std::mt19937_64 rng(2);
  double worst_asym = 0, worst_oracle = 0;
  bool ranged = true, zero_iff_equal = true;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    const auto p = oracle::random_distribution(rng, n);
    const auto q = oracle::random_distribution(rng, n);
    const double d = jsd(p, q);
    worst_asym = std::max(worst_asym, std::abs(d - jsd(q, p)));
    worst_oracle = std::max(worst_oracle, std::abs(d - oracle::kl_jsd(p, q)));
    ranged = ranged && d >= 0.0 && d <= 1.0;
    zero_iff_equal = zero_iff_equal && d > 1e-9 && std::abs(jsd(p, p)) <= 1e-9;
  }
  double worst_disjoint = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 10;
    auto p = oracle::random_distribution(rng, n), q = oracle::random_distribution(rng, n);
    std::vector<double> a(2 * n, 0.0), b(2 * n, 0.0);
    std::copy(p.begin(), p.end(), a.begin());
    std::copy(q.begin(), q.end(), b.begin() + static_cast<std::ptrdiff_t>(n));
    worst_disjoint = std::max(worst_disjoint, std::abs(jsd(a, b) - 1.0));
  }
  const bool ok = worst_asym <= 1e-9 && worst_oracle <= 1e-9 && ranged && zero_iff_equal && worst_disjoint <= 1e-12;
  return {ok, fmt("asym %.1e, vs oracle %.1e, disjoint |d-1| %.1e", worst_asym, worst_oracle, worst_disjoint)};
}

std::pair<bool, std::string> structural_change_checks() {
  const std::vector<int> js{1, 2, 3, 4, 5, 6, 7};
  ComponentSequence flat;
  flat.dim = 12;
  flat.vectors.assign(200, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  double worst_const = 0;
  for (const auto& [j, v] : structural_change(flat, js).mean_sc) worst_const = std::max(worst_const, std::abs(v));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  double worst_oracle = 0, worst_scale = 0;
  for (int trial = 0; trial < 5; ++trial) {
    ComponentSequence seq;
    seq.dim = 12;
    seq.vectors.assign(200, std::vector<double>(12));
    for (auto& row : seq.vectors) {
      for (double& x : row) x = trial % 2 ? g(rng) : u(rng);
    }
    const auto r = structural_change(seq, js);
    for (int j : js) {
      bool valid = false;
      const double want = oracle::brute_force_sc(seq.vectors, window_segments(j), &valid);
      if (valid) worst_oracle = std::max(worst_oracle, std::abs(r.mean_sc.at(j) - want));
    }
    if (trial % 2 == 0) {
      for (double c : {0.1, 10.0}) {
        auto scaled = seq;
        for (auto& row : scaled.vectors) {
          for (double& x : row) x *= c;
        }
        const auto s = structural_change(scaled, js);
        for (int j : js) worst_scale = std::max(worst_scale, std::abs(s.mean_sc.at(j) - r.mean_sc.at(j)));
      }
    }
  }
  const bool ok = worst_const == 0.0 && worst_oracle <= 1e-9 && worst_scale <= 1e-9;
  return {ok, fmt("constant %.1e, vs oracle %.1e, scale %.1e", worst_const, worst_oracle, worst_scale)};
}

std::pair<bool, std::string> dsp_sanity() {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  double worst_parseval = 0;
  for (std::size_t n : {512u, 1103u, 4096u}) {
    std::vector<double> x(n);
    double te = 0;
    for (double& v : x) {
      v = g(rng);
      te += v * v;
    }
    const auto mag = magnitude_spectrum(x);
    double fe = mag[0] * mag[0];
    for (std::size_t k = 1; k < mag.size(); ++k) fe += (n % 2 == 0 && k == n / 2 ? 1.0 : 2.0) * mag[k] * mag[k];
    worst_parseval = std::max(worst_parseval, std::abs(fe / n - te) / te);
  }
  double min_a = 1.0;
  for (const auto& v : chroma_sequence(sine_tone(440.0, 2.0)).vectors) min_a = std::min(min_a, v[9]);
  const auto [am, as] = arousal(silence(5.0));

  int frame_mismatch = 0;
  std::uniform_int_distribution<int> rate_d(8000, 48000), hop_d(1, 2000), extra_d(0, 3000), n_d(0, 200000);
  for (int t = 0; t < 100; ++t) {
    const int rate = rate_d(rng), hop = hop_d(rng), len = hop + extra_d(rng);
    const std::size_t n = static_cast<std::size_t>(len + n_d(rng));
    const auto layout = frame_layout(n, rate, static_cast<double>(len) / rate, static_cast<double>(hop) / rate);
    if (layout.count() != (n - static_cast<std::size_t>(len)) / static_cast<std::size_t>(hop) + 1) ++frame_mismatch;
  }
  const bool ok = worst_parseval <= 1e-6 && min_a > 0.8 && am == 0.0 && as == 0.0 && frame_mismatch == 0;
  return {ok, fmt("parseval %.1e, chroma A %.3f, silence arousal (%g, %g), frame mismatches %d", worst_parseval,
                  min_a, am, as, frame_mismatch)};
}

std::pair<bool, std::string> codebook_recovery() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.01);
  Matrix centres(32, 20);
  for (std::size_t c = 0; c < 32; ++c) {
    for (std::size_t d = 0; d < 20; ++d) {
      centres(c, d) = d < 5 ? 2.0 * static_cast<double>((c >> d) & 1) : 2.0 * static_cast<double>(rng() % 3);
    }
  }
  Matrix points(0, 20);
  std::vector<double> row(20);
  for (int rep = 0; rep < 50; ++rep) {
    for (std::size_t c = 0; c < 32; ++c) {
      for (std::size_t d = 0; d < 20; ++d) row[d] = centres(c, d) + noise(rng);
      points.push_row(row);
    }
  }
  const auto a = fit_codebook(points, 32, 9);
  const auto b = fit_codebook(points, 32, 9);
  std::set<std::size_t> hit;
  double worst = 0;
  for (std::size_t c = 0; c < 32; ++c) {
    const auto j = nearest_centroid(centres.row(c), a.centroids);
    hit.insert(j);
    double s = 0;
    for (std::size_t d = 0; d < 20; ++d) s += (centres(c, d) - a.centroids(j, d)) * (centres(c, d) - a.centroids(j, d));
    worst = std::max(worst, std::sqrt(s));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < a.inertia_history.size(); ++i) {
    monotone = monotone && a.inertia_history[i] <= a.inertia_history[i - 1];
  }
  const bool identical = a.centroids == b.centroids && a.inertia == b.inertia;
  const bool ok = hit.size() == 32 && worst <= 0.05 && identical && monotone;
  return {ok, fmt("%zu/32 matched, max centroid err %.4f, identical %d, monotone %d", hit.size(), worst,
                  identical, monotone)};
}

std::pair<bool, std::string> classifier_checks() {
  LabeledDataset xr;
  for (auto p : {std::vector<double>{0, 0}, {1, 1}, {0, 1}, {1, 0}}) xr.features.push_row(p);
  xr.labels = {-1, -1, 1, 1};
  const double xor_ba = balanced_accuracy(train_svm_rbf(xr, 10, 1).predict(xr.features), xr.labels).balanced_accuracy;

  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  double worst_balance = 0;
  bool box = true;
  for (int trial = 0; trial < 50; ++trial) {
    LabeledDataset d;
    const std::size_t dim = 1 + rng() % 4;
    std::vector<double> row(dim);
    for (int i = 0; i < 40 + static_cast<int>(rng() % 40); ++i) {
      const int y = i % 2 ? 1 : -1;
      for (double& v : row) v = g(rng) + 0.5 * y;
      d.features.push_row(row);
      d.labels.push_back(y);
    }
    const double C = std::ldexp(1.0, static_cast<int>(rng() % 5) - 2);
    const auto m = train_svm_rbf(d, C, 0.5);
    double bal = 0;
    for (std::size_t s = 0; s < m.dual_coefficients.size(); ++s) {
      box = box && m.dual_coefficients[s] >= 0 && m.dual_coefficients[s] <= C;
      bal += m.dual_coefficients[s] * m.support_labels[s];
    }
    worst_balance = std::max(worst_balance, std::abs(bal));
  }

  LabeledDataset lr;
  std::vector<double> row(3);
  for (int i = 0; i < 60; ++i) {
    for (double& v : row) v = g(rng);
    lr.features.push_row(row);
    lr.labels.push_back(i % 2 ? 1 : -1);
  }
  const auto z = standardize_apply(standardize_fit(lr.features), lr.features);
  double worst_fd = 0;
  for (int point = 0; point < 10; ++point) {
    std::vector<double> w{g(rng), g(rng), g(rng)};
    const double b = g(rng), l2 = 0.5;
    const auto grad = logistic_gradient(z, lr.labels, l2, w, b);
    for (std::size_t k = 0; k < 4; ++k) {
      auto wp = w, wm = w;
      double bp = b, bm = b;
      if (k < 3) wp[k] += 1e-5, wm[k] -= 1e-5;
      else bp += 1e-5, bm -= 1e-5;
      const double fd =
          (logistic_objective(z, lr.labels, l2, wp, bp) - logistic_objective(z, lr.labels, l2, wm, bm)) / 2e-5;
      worst_fd = std::max(worst_fd, std::abs(fd - grad[k]) / std::max(1.0, std::abs(grad[k])));
    }
  }
  const std::vector<int> y{1, 1, -1, -1};
  const double perfect = balanced_accuracy(y, y).balanced_accuracy;
  const double constant = balanced_accuracy(std::vector<int>{1, 1, 1, 1}, y).balanced_accuracy;
  const bool ok = xor_ba == 1.0 && box && worst_balance <= 1e-6 && worst_fd <= 1e-4 && perfect == 1.0 &&
                  constant == 0.5;
  return {ok, fmt("XOR BA %.2f, |sum a y| %.1e, FD rel %.1e, BA corners %.2f/%.2f", xor_ba, worst_balance, worst_fd,
                  perfect, constant)};
}

// ---------------------------------------------------------------------------
// Planted-signal corpus

struct Planted {
  SyntheticCorpus corpus;
  FeatureStore features;
  double extract_seconds = 0;
};

AudioSource corpus_source(const SyntheticCorpus& c) {
  std::map<std::string, ChordClipSpec> specs;
  for (std::size_t i = 0; i < c.song_ids.size(); ++i) specs[c.song_ids[i]] = c.clips[i];
  return [specs](const std::string& id) { return chord_progression_clip(specs.at(id)); };
}

constexpr int kPlantedFeature = 2;  // ChromaSC3
constexpr Metric kPlantedMetric = Metric::Length;

std::vector<ChartEntry> chart_for(const SyntheticCorpus& corpus, const std::vector<int>& lengths) {
  return planted_chart(planted_songs(corpus, lengths));
}

ExperimentConfig planted_config() {
  ExperimentConfig cfg;
  cfg.metrics = {kPlantedMetric};
  cfg.experiments = {"single", "group"};
  cfg.codebook_subsample = 20;
  cfg.jobs = jobs();
  return cfg;
}

ExperimentData prepare_from_chart(const std::vector<ChartEntry>& chart, const FeatureStore& features,
                                  const ExperimentConfig& cfg, bool need_bof) {
  auto histories = filter_min_weeks(assemble_histories(chart, cfg.max_rank), cfg.min_weeks);
  return prepare_experiment(std::move(histories), features, cfg, need_bof);
}

std::pair<bool, std::string> planted_run(Planted& planted, std::optional<ExperimentData>& kept) {
  const auto t0 = Clock::now();
  CorpusSpec spec;
  spec.songs = 300;
  spec.seconds = 66.5;
  spec.debut_weeks = 1000;
  planted.corpus = synthetic_corpus(spec);
  planted.features = extract_features(planted.corpus.song_ids, corpus_source(planted.corpus), true, jobs());
  planted.extract_seconds = seconds_since(t0);

  std::vector<double> scores;
  for (const auto& id : planted.corpus.song_ids) scores.push_back(planted.features.at(id).complexity[kPlantedFeature]);
  const auto lengths = lengths_from_scores(scores, 3, 40);

  const auto cfg = planted_config();
  auto data = prepare_from_chart(chart_for(planted.corpus, lengths), planted.features, cfg, true);
  const auto tables = run_tables(data, cfg);
  const auto& single = tables.at(0);
  const std::string planted_row = complexity_feature_names()[kPlantedFeature];
  const auto* cell = single.find(planted_row, kPlantedMetric);
  const double planted_ba = cell && cell->report ? cell->report->balanced_accuracy : -1.0;

  // Controls: the same cell after shuffling chart lengths across songs.
  std::mt19937_64 rng(77);
  const int n_controls = 20;
  double control_sum = 0;
  int control_ok = 0;
  for (int k = 0; k < n_controls; ++k) {
    auto shuffled = lengths;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto control = prepare_from_chart(chart_for(planted.corpus, shuffled), planted.features, cfg, false);
    const auto c = evaluate_cell(control, "control", single_feature_set(planted_row), kPlantedMetric, cfg);
    if (c.report) {
      control_sum += c.report->balanced_accuracy;
      ++control_ok;
    }
  }
  const double control_ba = control_ok ? control_sum / control_ok : -1.0;
  const double total = seconds_since(t0);
  kept.emplace(std::move(data));
  const bool ok = planted_ba >= 0.9 && control_ba >= 0.4 && control_ba <= 0.6 && total < 600.0;
  return {ok, fmt("%s/%s test BA %.3f (n_test=%zu), control mean BA %.3f over %d permutations, %.0f s "
                  "(extraction %.0f s)",
                  planted_row.c_str(), std::string(metric_name(kPlantedMetric)).c_str(), planted_ba,
                  cell ? cell->test_labels.size() : 0, control_ba, control_ok, total, planted.extract_seconds)};
}

std::pair<bool, std::string> leakage(const std::optional<ExperimentData>& data) {
  if (!data) return {false, "planted run did not produce data"};
  const auto audit = audit_leakage(*data, planted_config());
  return {audit.ok(), fmt("codebook identical %d, medians identical %d (%zu test songs removed)",
                          audit.codebook_identical, audit.medians_identical, data->split.test.size())};
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), root).generic_string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return files;
}

std::pair<bool, std::string> determinism() {
  const fs::path root = fs::temp_directory_path() / "popmir_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root / "audio");

  CorpusSpec spec;
  spec.songs = 60;
  spec.seconds = 66.5;
  spec.debut_weeks = 200;
  spec.seed = 11;
  const auto corpus = synthetic_corpus(spec);
  std::ofstream manifest(root / "manifest.csv");
  manifest << "song_id,wav_path\n";
  std::vector<double> rates;
  for (std::size_t i = 0; i < corpus.song_ids.size(); ++i) {
    write_wav_file(root / "audio" / (corpus.song_ids[i] + ".wav"), chord_progression_clip(corpus.clips[i]));
    manifest << corpus.song_ids[i] << ",audio/" << corpus.song_ids[i] << ".wav\n";
    rates.push_back(1.0 / corpus.clips[i].change_seconds);
  }
  manifest.close();
  {
    std::ofstream chart(root / "chart.csv");
    write_chart_csv(chart, chart_for(corpus, lengths_from_scores(rates, 3, 20)));
  }
  nlohmann::json cfg = {{"chart_path", "chart.csv"},
                        {"audio_manifest", "manifest.csv"},
                        {"output_dir", "out"},
                        {"codebook", {{"subsample", 20}}},
                        {"n_resamples", 300},
                        {"jobs", jobs()}};
  std::ofstream(root / "config.json") << cfg.dump(2);

  std::vector<std::map<std::string, std::string>> runs;
  // Same config both times, output directory included; the first run's
  // files are read and removed before the second starts.
  for (int r = 0; r < 2; ++r) {
    const auto config = load_config(root / "config.json");
    run_experiment(config);
    runs.push_back(read_tree(config.output_dir));
    fs::remove_all(config.output_dir);
  }
  std::size_t differing = 0;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) ++differing;
  }
  const bool ok = !runs[0].empty() && runs[0].size() == runs[1].size() && differing == 0;
  fs::remove_all(root);
  return {ok, fmt("%zu files per run, %zu differ", runs[0].size(), differing)};
}

void real_data_check() {
  const char* path = std::getenv("POPMIR_REAL_CHART");
  if (!path || !*path) {
    std::printf("SKIP 11 real-data statistics: set POPMIR_REAL_CHART to a chart CSV to enable\n");
    return;
  }
  criterion(11, "real-data statistics", [&] {
    std::ifstream in(path);
    if (!in) throw RuntimeError(std::string("cannot open ") + path);
    const auto hs = filter_min_weeks(assemble_histories(parse_chart_csv(in, 100), 100), 3);
    std::vector<double> debut, kurt;
    for (const auto& h : hs) {
      const auto m = compute_metrics(h);
      debut.push_back(m.debut);
      kurt.push_back(m.kurtosis);
    }
    const double mean_debut = std::accumulate(debut.begin(), debut.end(), 0.0) / debut.size();
    const double med_debut = median(debut);
    const double mean_kurt = std::accumulate(kurt.begin(), kurt.end(), 0.0) / kurt.size();
    auto near = [](double got, double want) { return std::abs(got - want) <= 0.05 * std::abs(want); };
    const bool ok = near(mean_debut, 21.8) && near(med_debut, 16.0) && near(mean_kurt, -0.62);
    return std::pair{ok, fmt("%zu songs: mean Debut %.2f (ref 21.8), median Debut %.1f (ref 16), mean Kurtosis %.3f "
                             "(ref -0.62)",
                             hs.size(), mean_debut, med_debut, mean_kurt)};
  });
}

}  // namespace

int main() {
  criterion(1, "metric oracle equivalence", metric_oracle);
  criterion(2, "rank score endpoints", rank_endpoints);
  criterion(3, "JSD properties", jsd_properties);
  criterion(4, "structural change", structural_change_checks);
  criterion(5, "DSP sanity", dsp_sanity);
  criterion(6, "codebook recovery", codebook_recovery);
  criterion(7, "classifier correctness", classifier_checks);
  Planted planted;
  std::optional<ExperimentData> data;
  criterion(8, "planted-signal end to end", [&] { return planted_run(planted, data); });
  criterion(9, "no-leakage audit", [&] { return leakage(data); });
  criterion(10, "determinism", determinism);
  real_data_check();
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}

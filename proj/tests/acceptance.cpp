// Acceptance suite: one PASS, FAIL or SKIP line per criterion. Exits 1 when
// any criterion fails.
//
// Criteria that need the public dataset read it from CURSORPROF_REAL_DATA (a
// dataset directory or canonical JSONL). CURSORPROF_ACCEPT_CONFIG may name a
// JSON file merged over the real-data run config.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cursorprof/experiment.hpp"
#include "cursorprof/features.hpp"
#include "cursorprof/gru.hpp"
#include "cursorprof/io.hpp"
#include "cursorprof/metrics.hpp"
#include "cursorprof/noise.hpp"
#include "cursorprof/parallel.hpp"
#include "cursorprof/synthetic.hpp"

using namespace cursorprof;
namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::skip;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << v;
  return o.str();
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::optional<fs::path> real_data_path() {
  const char* p = std::getenv("CURSORPROF_REAL_DATA");
  if (!p || !*p) return std::nullopt;
  return fs::path(p);
}

const char* kNoRealData = "real-data part skipped: CURSORPROF_REAL_DATA not set";

// 1. Gradient oracle

double loss_of(const SequenceTensor& seq, const rnn::Parameters& p, const rnn::ForwardOptions& o,
               int y) {
  rnn::ForwardCache c;
  rnn::bigru_forward(seq, p, o, &c);
  return rnn::bce_from_logit(c.logit, y);
}

Outcome gradient_oracle() {
  Timer timer;
  const std::size_t H = 4, T = 5;
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t checked = 0, bad = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    rnn::Parameters p = rnn::init_parameters(H, rng);
    std::normal_distribution<double> g(0.0, 0.5);
    for (double& v : p.values())
      if (v == 0.0) v = g(rng);  // biases off zero
    SequenceTensor seq;
    seq.max_len = T;
    seq.true_length = T;
    for (std::size_t i = 0; i < 3 * T; ++i) seq.values.push_back(g(rng) * 2.0);
    const int y = static_cast<int>(seed % 2);
    rnn::ForwardOptions opts;
    std::vector<double> mask;
    if (seed % 2) {
      mask = rnn::draw_dropout_mask(2 * H, 0.25, rng);
      opts.train_mode = true;
      opts.dropout_mask = mask;
    }
    rnn::ForwardCache c;
    rnn::bigru_forward(seq, p, opts, &c);
    rnn::Parameters grad(H);
    rnn::bigru_backward(c, p, y, grad);
    for (std::size_t i = 0; i < p.size(); ++i) {
      rnn::Parameters a = p, b = p;
      a.values()[i] += h;
      b.values()[i] -= h;
      const double num = (loss_of(seq, a, opts, y) - loss_of(seq, b, opts, y)) / (2.0 * h);
      const double ana = grad.values()[i];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6});
      worst = std::max(worst, rel);
      bad += rel >= 1e-4;
      ++checked;
    }
  }
  const double secs = timer.seconds();
  const bool ok = bad == 0 && secs < 60.0;
  return {ok ? Status::pass : Status::fail,
          "20 instances (H 4, T 5), " + std::to_string(checked) + " partials, max rel err " +
              fmt(worst, 10) + ", " + fmt(secs, 1) + " s"};
}

// 2. AUC oracle

Outcome auc_oracle() {
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<int> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % 2);
      s[i] = trial % 2 ? static_cast<double>(rng() % 6) : std::uniform_real_distribution<double>()(rng);
    }
    y[0] = 1;
    y[n - 1] = 0;
    long long num = 0, den = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] == 1 && y[j] == 0) {
          den += 2;
          num += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
        }
    const double brute = static_cast<double>(num) / static_cast<double>(den);
    mismatches += metrics::roc_auc(y, s) != brute;
  }
  return {mismatches == 0 ? Status::pass : Status::fail,
          "200 instances, n <= 50, " + std::to_string(mismatches) + " inexact"};
}

// Synthetic runs shared by criteria 3, 5 and 6.

experiment::RunConfig synthetic_config() {
  experiment::RunConfig cfg;
  cfg.task = Task::gender;
  cfg.seed = 7;
  cfg.rf_grid = experiment::RfGrid::fast;
  cfg.rnn.hidden = 16;
  cfg.rnn.max_epochs = 60;
  cfg.rnn.standardize_inputs = true;
  return cfg;
}

Dataset synthetic(double signal) {
  synth::SynthConfig sc;
  sc.n_sessions = 2000;
  sc.signal_strength = signal;
  sc.seed = 7;
  return synth::generate(sc);
}

struct Runs {
  std::map<std::string, experiment::RunResult> cache;
  std::map<std::string, double> seconds;

  const experiment::RunResult& get(const std::string& key,
                                   const std::function<experiment::RunResult()>& make) {
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    Timer t;
    auto r = make();
    seconds[key] = t.seconds();
    return cache.emplace(key, std::move(r)).first->second;
  }
};

double auc_of(const experiment::RunResult& r, const std::string& name) {
  return r.report.get(name).auc;
}

double f1_of(const experiment::RunResult& r, const std::string& name) {
  return r.report.get(name).prf.f1;
}

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

Outcome planted_signal(Runs& runs) {
  const auto& s1 = runs.get("synthetic-1", [] { return experiment::run(synthetic(1.0), synthetic_config()); });
  const auto& s0 = runs.get("synthetic-0", [] { return experiment::run(synthetic(0.0), synthetic_config()); });
  const double secs = runs.seconds["synthetic-1"] + runs.seconds["synthetic-0"];
  const double g1 = auc_of(s1, "bigru"), r1 = auc_of(s1, "rf");
  const double g0 = auc_of(s0, "bigru"), r0 = auc_of(s0, "rf");
  const bool ok = g1 >= 0.90 && r1 >= 0.85 && within(g0, 0.40, 0.60) && within(r0, 0.40, 0.60) &&
                  secs < 600.0;
  return {ok ? Status::pass : Status::fail,
          "signal 1: BiGRU AUC " + fmt(g1) + ", RF AUC " + fmt(r1) + "; signal 0: BiGRU AUC " +
              fmt(g0) + ", RF AUC " + fmt(r0) + "; " + fmt(secs, 0) + " s"};
}

// Real-data runs.

experiment::RunConfig real_config(Task task) {
  experiment::RunConfig cfg;
  cfg.task = task;
  cfg.seed = 7;
  cfg.rnn.standardize_inputs = true;
  if (const char* p = std::getenv("CURSORPROF_ACCEPT_CONFIG"); p && *p)
    cfg.merge_json(nlohmann::json::parse(read_text_file(p)));
  return cfg;
}

const Dataset& real_dataset() {
  static const Dataset d = [] {
    auto r = experiment::load_dataset(*real_data_path(), InputFormat::canonical_jsonl);
    return std::move(r.dataset);
  }();
  return d;
}

const experiment::RunResult& real_run(Runs& runs, Task task, const std::string& variant) {
  const std::string key = "real-" + std::string(to_string(task)) + "-" + variant;
  return runs.get(key, [&] {
    auto cfg = real_config(task);
    if (variant == "defended") {
      cfg.distort_test = noise::parse_sigma_spec("fixed:0.25");
      cfg.run_rf = false;
    } else if (variant == "retrained") {
      cfg.distort_train = noise::parse_sigma_spec("uniform");
      cfg.distort_test = noise::parse_sigma_spec("uniform");
      cfg.run_rf = false;
    }
    return experiment::run(real_dataset(), cfg);
  });
}

Outcome paper_reproduction(Runs& runs) {
  if (!real_data_path()) return {Status::skip, "public dataset not present (set CURSORPROF_REAL_DATA)"};
  const auto& age = real_run(runs, Task::age, "clean");
  const auto& gender = real_run(runs, Task::gender, "clean");
  struct Check {
    std::string name;
    double value, target;
  };
  const std::vector<Check> checks = {
      {"age BiGRU AUC", auc_of(age, "bigru"), 0.712},   {"age BiGRU F1", f1_of(age, "bigru"), 0.653},
      {"gender BiGRU AUC", auc_of(gender, "bigru"), 0.650},
      {"gender BiGRU F1", f1_of(gender, "bigru"), 0.641},
      {"age RF AUC", auc_of(age, "rf"), 0.528},         {"gender RF AUC", auc_of(gender, "rf"), 0.489}};
  bool ok = true;
  std::string detail;
  for (const auto& c : checks) {
    const bool hit = std::abs(c.value - c.target) <= 0.06;
    ok = ok && hit;
    detail += (detail.empty() ? "" : ", ") + c.name + " " + fmt(c.value) + " (target " +
              fmt(c.target, 3) + (hit ? ")" : ", out of tolerance)");
  }
  return {ok ? Status::pass : Status::fail, detail};
}

Outcome defense_collapse(Runs& runs) {
  const auto& defended = runs.get("synthetic-1-defended", [] {
    auto cfg = synthetic_config();
    cfg.distort_test = noise::parse_sigma_spec("fixed:0.25");
    cfg.run_rf = false;
    return experiment::run(synthetic(1.0), cfg);
  });
  const auto& clean = runs.get("synthetic-1", [] { return experiment::run(synthetic(1.0), synthetic_config()); });
  const double a = auc_of(defended, "bigru");
  bool ok = within(a, 0.42, 0.58);
  std::string detail = "synthetic: clean AUC " + fmt(auc_of(clean, "bigru")) + ", distorted-test AUC " +
                       fmt(a) + " (target [0.42, 0.58])";
  if (real_data_path()) {
    for (Task task : {Task::age, Task::gender}) {
      const double v = auc_of(real_run(runs, task, "defended"), "bigru");
      ok = ok && within(v, 0.42, 0.58);
      detail += "; real " + std::string(to_string(task)) + " distorted-test AUC " + fmt(v);
    }
  } else {
    detail += "; " + std::string(kNoRealData);
  }
  return {ok ? Status::pass : Status::fail, detail};
}

Outcome adversarial_retraining(Runs& runs) {
  const auto& clean = runs.get("synthetic-1", [] { return experiment::run(synthetic(1.0), synthetic_config()); });
  const auto& retrained = runs.get("synthetic-1-retrained", [] {
    auto cfg = synthetic_config();
    cfg.distort_train = noise::parse_sigma_spec("uniform");
    cfg.distort_test = noise::parse_sigma_spec("uniform");
    cfg.run_rf = false;
    return experiment::run(synthetic(1.0), cfg);
  });
  const double c = auc_of(clean, "bigru"), d = auc_of(retrained, "bigru");
  bool ok = c - d >= 0.03;
  std::string detail = "synthetic: clean-trained AUC " + fmt(c) + ", distorted-trained AUC " + fmt(d) +
                       ", margin " + fmt(c - d) + " (target >= 0.03)";
  if (real_data_path()) {
    const auto& rc = real_run(runs, Task::age, "clean");
    const auto& rd = real_run(runs, Task::age, "retrained");
    const double auc_drop = 1.0 - auc_of(rd, "bigru") / auc_of(rc, "bigru");
    const double f1_drop = 1.0 - f1_of(rd, "bigru") / f1_of(rc, "bigru");
    ok = ok && auc_drop >= 0.08 && f1_drop >= 0.10;
    detail += "; real age: AUC down " + fmt(100 * auc_drop, 1) + "% (target >= 8%), F1 down " +
              fmt(100 * f1_drop, 1) + "% (target >= 10%)";
  } else {
    detail += "; " + std::string(kNoRealData);
  }
  return {ok ? Status::pass : Status::fail, detail};
}

// 7. Noise invariants

Outcome noise_invariants() {
  std::mt19937_64 g(77);
  std::exponential_distribution<double> gap(1.0 / 100.0);
  std::uniform_real_distribution<double> pos(0.0, 800.0);
  std::size_t positivity = 0, monotone = 0, genuine = 0, radius = 0, synthetic = 0;
  const std::size_t trials = 100000;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t n = 1 + g() % 30;
    std::vector<CursorEvent> ev;
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CursorEvent e;
      e.x = g() % 10 == 0 ? 0.0 : pos(g);
      e.y = g() % 10 == 0 ? 0.0 : pos(g);
      e.t = t;
      e.name = g() % 8 == 0 ? EventName::click : EventName::mousemove;
      ev.push_back(e);
      t += g() % 20 == 0 ? 1e-6 : gap(g) + 1e-9;
    }
    noise::NoiseConfig cfg;
    cfg.events_per_gap = 1 + g() % 3;
    cfg.distribution = g() % 2 ? noise::Distribution::gaussian_radius : noise::Distribution::uniform_radius;
    if (g() % 2) {
      cfg.mode = noise::SigmaMode::uniform;
    } else {
      cfg.sigma = std::uniform_real_distribution<double>(0.0, 20.0)(g);
    }
    Rng rng(g());
    const auto out = noise::distort(ev, cfg, rng);
    std::size_t next = 0;
    for (std::size_t k = 0; k < out.events.size(); ++k) {
      const auto& e = out.events[k];
      if (k > 0 && !(e.t > out.events[k - 1].t)) ++monotone;
      if (out.anchor[k] < 0) {
        if (next >= ev.size() || !(ev[next] == e)) ++genuine;
        ++next;
        continue;
      }
      ++synthetic;
      const auto& a = ev[static_cast<std::size_t>(out.anchor[k])];
      if (!(e.x > 0.0 && e.y > 0.0 && e.t > 0.0)) ++positivity;
      if (std::hypot(e.x - a.x, e.y - a.y) > out.sigma * (1.0 + 1e-12)) ++radius;
    }
    if (next != ev.size()) ++genuine;
  }
  const std::size_t total = positivity + monotone + genuine + radius;
  return {total == 0 ? Status::pass : Status::fail,
          std::to_string(trials) + " distortions, " + std::to_string(synthetic) +
              " synthetic events; violations: positivity " + std::to_string(positivity) +
              ", monotonicity " + std::to_string(monotone) + ", genuine " + std::to_string(genuine) +
              ", radius " + std::to_string(radius)};
}

// 8. Statistics

Outcome statistics() {
  const auto adj = metrics::holm_adjust(std::vector<double>{0.01, 0.03, 0.04});
  const bool holm = adj == std::vector<double>{0.03, 0.06, 0.06};
  std::mt19937_64 rng(8);
  std::size_t broken = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 100;
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % 2);
      p[i] = static_cast<int>(rng() % 2);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += y[i] == p[i];
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    broken += std::abs(metrics::weighted_prf(y, p).recall - acc) > 1e-12;
  }
  std::ostringstream holm_text;
  holm_text << std::setprecision(17) << "[" << adj[0] << ", " << adj[1] << ", " << adj[2] << "]";
  return {holm && broken == 0 ? Status::pass : Status::fail,
          "Holm [0.01, 0.03, 0.04] -> " + holm_text.str() + "; recall = accuracy broken on " +
              std::to_string(broken) + " of 1000"};
}

// 9. Determinism

std::map<std::string, std::string> run_to_files(const Dataset& d, const experiment::RunConfig& base,
                                                std::size_t threads, const fs::path& dir) {
  set_max_threads(threads);
  auto cfg = base;
  cfg.output = dir.string();
  const auto r = experiment::run(d, cfg);
  experiment::write_outputs(r, cfg, {});
  set_max_threads(0);
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name == "manifest.json") continue;  // carries a timestamp
    files[name] = read_text_file(entry.path());
  }
  return files;
}

Outcome determinism() {
  synth::SynthConfig sc;
  sc.n_sessions = 300;
  sc.seed = 9;
  const auto d = synth::generate(sc);
  experiment::RunConfig cfg;
  cfg.seed = 13;
  cfg.rf_grid = experiment::RfGrid::fast;
  cfg.rnn.hidden = 8;
  cfg.rnn.max_epochs = 5;
  cfg.rnn.standardize_inputs = true;
  cfg.distort_test = noise::parse_sigma_spec("uniform");
  std::random_device rd;
  const fs::path root = fs::temp_directory_path() / ("cursorprof-accept-" + std::to_string(rd()));
  const auto a = run_to_files(d, cfg, 1, root / "a");
  const auto b = run_to_files(d, cfg, 1, root / "b");
  const auto c = run_to_files(d, cfg, 4, root / "c");
  std::error_code ec;
  fs::remove_all(root, ec);
  const bool ok = !a.empty() && a == b && a == c;
  return {ok ? Status::pass : Status::fail,
          std::to_string(a.size()) + " output files compared byte for byte across two runs and threads {1, 4}" +
              (ok ? "" : ": outputs differ")};
}

// 10. Feature filter

Outcome feature_filter(Runs& runs) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g;
  features::FeatureMatrix m;
  m.rows = 50;
  m.names = {"a", "a_copy", "b", "a_copy2"};
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double a = g(rng), b = g(rng);
    m.data.insert(m.data.end(), {a, a, b, a});
  }
  const auto mask = features::fit_filter(m);
  const bool dup_ok = mask.kept == std::vector<std::size_t>{0, 2};
  bool ok = dup_ok;
  std::string detail = std::string("three identical columns pruned to one: ") + (dup_ok ? "yes" : "no");
  if (real_data_path()) {
    const std::size_t kept = real_run(runs, Task::age, "clean").mask.kept.size();
    ok = ok && kept >= 42 && kept <= 62;
    detail += "; real data keeps " + std::to_string(kept) + " features (target [42, 62])";
  } else {
    detail += "; " + std::string(kNoRealData);
  }
  return {ok ? Status::pass : Status::fail, detail};
}

}  // namespace

int main() {
  Runs runs;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient oracle", gradient_oracle},
      {"AUC oracle", auc_oracle},
      {"planted-signal sanity", [&] { return planted_signal(runs); }},
      {"paper reproduction", [&] { return paper_reproduction(runs); }},
      {"defense collapse", [&] { return defense_collapse(runs); }},
      {"adversarial retraining direction", [&] { return adversarial_retraining(runs); }},
      {"noise invariants", noise_invariants},
      {"statistics", statistics},
      {"determinism", determinism},
      {"feature filter", [&] { return feature_filter(runs); }},
  };
  bool failed = false;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("error: ") + e.what()};
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
    failed = failed || o.status == Status::fail;
    std::cout << tag << " " << i + 1 << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}

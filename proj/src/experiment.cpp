#include "cursorprof/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "cursorprof/hash.hpp"
#include "cursorprof/io.hpp"

namespace cursorprof::experiment {
namespace fs = std::filesystem;
namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + std::string(where));
  }
}

std::string_view format_tag(InputFormat f) {
  return f == InputFormat::canonical_jsonl ? "canonical_jsonl" : "attentive_cursor_raw";
}

nlohmann::json noise_json(const std::optional<noise::NoiseConfig>& n) {
  if (!n) return nullptr;
  auto j = n->to_json();
  j.erase("seed");  // always the run's root seed
  return j;
}

std::optional<noise::NoiseConfig> noise_from(const nlohmann::json& j, std::string_view where) {
  if (j.is_null()) return std::nullopt;
  check_keys(j, {"sigma", "events_per_gap", "distribution"}, where);
  return noise::NoiseConfig::from_json(j);
}

std::string hash_path(const fs::path& p) {
  if (!fs::is_directory(p)) return sha256_file(p);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& f : files)
    listing += fs::relative(f, p).generic_string() + " " + sha256_file(f) + "\n";
  return sha256_hex(listing);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string_view to_string(RfGrid g) { return g == RfGrid::full ? "full" : "fast"; }

RfGrid rf_grid_from(std::string_view name) {
  if (name == "full") return RfGrid::full;
  if (name == "fast") return RfGrid::fast;
  throw ConfigError("unknown RF grid '" + std::string(name) + "', expected full or fast");
}

std::vector<forest::RFConfig> make_grid(RfGrid g, std::size_t n_features, std::uint64_t seed) {
  if (g == RfGrid::full) return forest::default_grid(n_features, seed);
  std::vector<forest::RFConfig> grid;
  for (std::size_t node : {1, 5}) {
    forest::RFConfig c;
    c.n_trees = 100;
    c.min_node_size = node;
    c.seed = seed;
    grid.push_back(c);
  }
  return grid;
}

void RunConfig::validate(bool check_paths) const {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0, 1)");
  if (!(rf_holdout > 0.0 && rf_holdout < 1.0)) throw ConfigError("rf holdout must lie in (0, 1)");
  if (min_coords < 2) throw ConfigError("min_coords must be at least 2");
  if (!(filter.corr_threshold > 0.0 && filter.corr_threshold <= 1.0))
    throw ConfigError("corr_threshold must lie in (0, 1]");
  if (!(filter.corr_p > 0.0 && filter.corr_p <= 1.0)) throw ConfigError("corr_p must lie in (0, 1]");
  rnn.validate();
  if (distort_train) distort_train->validate();
  if (distort_test) distort_test->validate();
  if (!run_zeror && !run_rf && !run_bigru) throw ConfigError("no classifier selected");
  if (check_paths) {
    if (input.empty()) throw ConfigError("no input given");
    if (!fs::exists(input)) throw ConfigError("input not found: " + input);
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["format"] = std::string(kRunConfigFormat);
  j["version"] = 1;
  j["task"] = std::string(to_string(task));
  j["input"] = input;
  j["input_format"] = std::string(format_tag(format));
  j["output"] = output;
  j["model"] = model;
  j["reference"] = reference;
  j["seed"] = seed;
  j["split"] = {{"test_fraction", test_fraction}, {"stratify", stratify}, {"min_coords", min_coords}};
  j["features"] = {{"hover_ms", features.hover_ms},
                   {"pause_ms", features.pause_ms},
                   {"direction_change_deg", features.direction_change_deg},
                   {"corr_threshold", filter.corr_threshold},
                   {"corr_p", filter.corr_p},
                   {"drop_linear_dependent", filter.drop_linear_dependent}};
  j["rf"] = {{"grid", std::string(to_string(rf_grid))}, {"holdout_fraction", rf_holdout}};
  auto r = rnn.to_json();
  r.erase("seed");
  j["rnn"] = r;
  j["distort_train"] = noise_json(distort_train);
  j["distort_test"] = noise_json(distort_test);
  nlohmann::json cls = nlohmann::json::array();
  if (run_zeror) cls.push_back("zeror");
  if (run_rf) cls.push_back("rf");
  if (run_bigru) cls.push_back("bigru");
  j["classifiers"] = cls;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  check_keys(j, {"format", "version", "task", "input", "input_format", "output", "model",
                 "reference", "seed", "split", "features", "rf", "rnn", "distort_train",
                 "distort_test", "classifiers"},
             "run config");
  if (j.contains("format") && j.at("format") != kRunConfigFormat)
    throw ConfigError("run config has format '" + j.at("format").dump() + "'");
  if (j.value("version", 1) != 1) throw ConfigError("unsupported run config version");
  RunConfig c;
  try {
    if (j.contains("task")) c.task = task_from(j.at("task").get<std::string>());
    c.input = j.value("input", c.input);
    if (j.contains("input_format"))
      c.format = input_format_from(j.at("input_format").get<std::string>());
    c.output = j.value("output", c.output);
    c.model = j.value("model", c.model);
    c.reference = j.value("reference", c.reference);
    c.seed = j.value("seed", c.seed);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      check_keys(s, {"test_fraction", "stratify", "min_coords"}, "split");
      c.test_fraction = s.value("test_fraction", c.test_fraction);
      c.stratify = s.value("stratify", c.stratify);
      c.min_coords = s.value("min_coords", c.min_coords);
    }
    if (j.contains("features")) {
      const auto& f = j.at("features");
      check_keys(f, {"hover_ms", "pause_ms", "direction_change_deg", "corr_threshold", "corr_p",
                     "drop_linear_dependent"},
                 "features");
      c.features.hover_ms = f.value("hover_ms", c.features.hover_ms);
      c.features.pause_ms = f.value("pause_ms", c.features.pause_ms);
      c.features.direction_change_deg = f.value("direction_change_deg", c.features.direction_change_deg);
      c.filter.corr_threshold = f.value("corr_threshold", c.filter.corr_threshold);
      c.filter.corr_p = f.value("corr_p", c.filter.corr_p);
      c.filter.drop_linear_dependent = f.value("drop_linear_dependent", c.filter.drop_linear_dependent);
    }
    if (j.contains("rf")) {
      const auto& r = j.at("rf");
      check_keys(r, {"grid", "holdout_fraction"}, "rf");
      if (r.contains("grid")) c.rf_grid = rf_grid_from(r.at("grid").get<std::string>());
      c.rf_holdout = r.value("holdout_fraction", c.rf_holdout);
    }
    if (j.contains("rnn")) {
      const auto& r = j.at("rnn");
      check_keys(r, {"max_len", "hidden", "dropout", "learning_rate", "beta1", "beta2",
                     "adam_epsilon", "batch_size", "max_epochs", "early_stop_patience",
                     "validation_fraction", "standardize_inputs", "mask_padding"},
                 "rnn");
      c.rnn = rnn::TrainConfig::from_json(r);
    }
    if (j.contains("distort_train")) c.distort_train = noise_from(j.at("distort_train"), "distort_train");
    if (j.contains("distort_test")) c.distort_test = noise_from(j.at("distort_test"), "distort_test");
    if (j.contains("classifiers")) {
      c.run_zeror = c.run_rf = c.run_bigru = false;
      for (const auto& name : j.at("classifiers")) {
        const auto s = name.get<std::string>();
        if (s == "zeror") c.run_zeror = true;
        else if (s == "rf") c.run_rf = true;
        else if (s == "bigru") c.run_bigru = true;
        else throw ConfigError("unknown classifier '" + s + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.rnn.seed = c.seed;
  if (c.distort_train) c.distort_train->seed = c.seed;
  if (c.distort_test) c.distort_test->seed = c.seed;
  c.validate();
  return c;
}

void RunConfig::merge_json(const nlohmann::json& j) {
  auto base = to_json();
  base.merge_patch(j);
  // merge_patch deletes keys set to null; absent noise keys mean "off".
  *this = from_json(base);
}

ParseResult load_dataset(const fs::path& path, InputFormat format) {
  if (fs::is_directory(path)) return import_attentive_cursor_dir(path);
  return parse_sessions_text(read_text_file(path), format, path.stem().string());
}

std::vector<double> RfPipeline::predict(std::span<const Session> sessions) const {
  const auto x = features::apply_bounds(
      features::apply_mask(features::extract_matrix(sessions, options), mask), bounds);
  return forest.predict(x);
}

TrainedModel RfPipeline::to_model(Task task, nlohmann::json metadata) const {
  auto m = forest::to_model(forest, task, std::move(metadata));
  m.parameters["feature_mask"] = mask.to_json();
  m.parameters["bounds"] = bounds.to_json();
  m.parameters["feature_options"] = {{"hover_ms", options.hover_ms},
                                     {"pause_ms", options.pause_ms},
                                     {"direction_change_deg", options.direction_change_deg}};
  return m;
}

RfPipeline RfPipeline::from_model(const TrainedModel& m) {
  RfPipeline p;
  p.forest = forest::forest_from(m);
  const auto& j = m.parameters;
  if (!j.contains("feature_mask") || !j.contains("bounds"))
    throw DataError("random forest model lacks its feature pipeline");
  p.mask = features::FeatureMask::from_json(j.at("feature_mask"));
  p.bounds = features::Bounds::from_json(j.at("bounds"));
  const auto& o = j.at("feature_options");
  p.options.hover_ms = o.at("hover_ms").get<double>();
  p.options.pause_ms = o.at("pause_ms").get<double>();
  p.options.direction_change_deg = o.at("direction_change_deg").get<double>();
  if (p.mask.kept.size() != p.bounds.min.size() || p.mask.kept.size() != p.forest.n_features)
    throw DataError("random forest model has inconsistent feature dimensions");
  return p;
}

RfFit fit_rf_pipeline(std::span<const Session> train, std::span<const int> y,
                      const RunConfig& cfg) {
  RfFit out;
  out.pipeline.options = cfg.features;
  const auto raw = features::extract_matrix(train, cfg.features);
  out.pipeline.mask = features::fit_filter(raw, cfg.filter);
  const auto norm = features::normalize(features::apply_mask(raw, out.pipeline.mask));
  out.pipeline.bounds = norm.bounds;
  out.search = forest::grid_search_rf(norm.matrix, y,
                                      make_grid(cfg.rf_grid, norm.matrix.cols(), cfg.seed),
                                      cfg.rf_holdout, cfg.seed);
  out.pipeline.forest = out.search.model;
  return out;
}

RunResult run(const Dataset& data, const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.rnn.seed = cfg.seed;
  cfg.validate();
  RunResult out;

  FilterResult fr = filter_sessions(data, cfg.task, cfg.min_coords);
  out.removed = fr.removed;
  SplitOptions so;
  so.test_fraction = cfg.test_fraction;
  so.seed = cfg.seed;
  so.stratify = cfg.stratify;
  so.task = cfg.task;
  SplitResult sr = split_dataset(fr.dataset, so);
  for (auto& d : sr.diagnostics) out.diagnostics.push_back(d);
  Dataset ds = std::move(sr.dataset);

  if (cfg.distort_train) {
    auto n = *cfg.distort_train;
    n.seed = cfg.seed;
    ds = noise::distort_partition(ds, Partition::train, n);
  }
  if (cfg.distort_test) {
    auto n = *cfg.distort_test;
    n.seed = cfg.seed;
    ds = noise::distort_partition(ds, Partition::test, n);
  }
  const Dataset train = ds.partition(Partition::train);
  const Dataset test = ds.partition(Partition::test);
  out.n_train = train.sessions.size();
  out.n_test = test.sessions.size();
  if (test.sessions.empty()) throw DataError("test split is empty");

  std::vector<int> y_train, y_test;
  std::vector<std::string> ids;
  for (const auto& s : train.sessions) y_train.push_back(*label_of(s, cfg.task));
  for (const auto& s : test.sessions) {
    y_test.push_back(*label_of(s, cfg.task));
    ids.push_back(s.id);
  }
  if (std::count(y_train.begin(), y_train.end(), 1) == 0 ||
      std::count(y_train.begin(), y_train.end(), 0) == 0)
    throw DataError("training split needs both classes");

  nlohmann::json meta;
  meta["tool_version"] = CURSORPROF_VERSION;
  meta["seed"] = cfg.seed;
  meta["dataset_sha256"] = sha256_hex(serialize_dataset(fr.dataset));
  meta["n_train"] = out.n_train;
  meta["n_test"] = out.n_test;
  meta["removed"] = {{"too_few_coordinates", fr.removed.too_few_coordinates},
                     {"undisclosed_label", fr.removed.undisclosed_label}};
  meta["distort_train"] = noise_json(cfg.distort_train);
  meta["distort_test"] = noise_json(cfg.distort_test);

  std::vector<report::ScoredClassifier> scored;
  if (cfg.run_zeror) {
    const auto z = forest::train_zeror(y_train);
    scored.push_back({"zeror", std::vector<double>(y_test.size(), z.score())});
  }
  if (cfg.run_rf) {
    auto fit = fit_rf_pipeline(train.sessions, y_train, cfg);
    out.mask = fit.pipeline.mask;
    for (auto& d : fit.search.diagnostics) out.diagnostics.push_back(d);
    scored.push_back({"rf", fit.pipeline.predict(test.sessions)});
    meta["features_kept"] = out.mask.names.size();
    meta["rf_best"] = fit.search.best.to_json();
    meta["rf_selection"] = fit.search.used_cross_validation ? "5-fold" : "holdout";
    out.rf = std::move(fit);
  }
  if (cfg.run_bigru) {
    std::vector<rnn::LabeledSequence> seqs;
    seqs.reserve(train.sessions.size());
    for (std::size_t i = 0; i < train.sessions.size(); ++i)
      seqs.push_back({to_sequence(train.sessions[i], cfg.rnn.max_len), y_train[i]});
    auto tr = rnn::train_bigru(seqs, cfg.rnn);
    std::vector<SequenceTensor> test_seqs;
    for (const auto& s : test.sessions) test_seqs.push_back(to_sequence(s, cfg.rnn.max_len));
    scored.push_back({"bigru", tr.model.predict(test_seqs)});
    meta["bigru_best_epoch"] = tr.best_epoch;
    meta["bigru_epochs_run"] = tr.log.size();
    out.bigru = std::move(tr);
  }

  out.report = report::evaluate(cfg.task, ids, y_test, scored);
  for (const auto& d : out.diagnostics) out.report.diagnostics.push_back(d);
  meta["config"] = cfg.to_json();
  // Paths do not affect results; keep them out so reports compare equal.
  for (const char* k : {"input", "output", "model", "reference"}) meta["config"].erase(k);
  out.report.metadata = std::move(meta);
  return out;
}

nlohmann::json Manifest::to_json() const {
  auto files = [](const std::vector<fs::path>& paths) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : paths) {
      nlohmann::json e;
      e["path"] = p.generic_string();
      e["sha256"] = fs::exists(p) ? nlohmann::json(hash_path(p)) : nlohmann::json(nullptr);
      arr.push_back(e);
    }
    return arr;
  };
  nlohmann::json j;
  j["tool"] = "cursorprof";
  j["version"] = CURSORPROF_VERSION;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config;
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);
  j["created_at"] = utc_now();
  return j;
}

void Manifest::write(const fs::path& path) const { write_text_file(path, to_json().dump(2) + "\n"); }

std::vector<fs::path> write_outputs(const RunResult& r, const RunConfig& cfg,
                                    const std::vector<fs::path>& inputs) {
  if (cfg.output.empty()) throw ConfigError("no output directory given");
  const fs::path dir = cfg.output;
  std::vector<fs::path> written;
  auto put = [&](const fs::path& name, const std::string& text) {
    write_text_file(dir / name, text);
    written.push_back(dir / name);
  };
  put("report.json", r.report.to_json().dump(2) + "\n");
  std::optional<report::EvalReport> ref;
  if (!cfg.reference.empty())
    ref = report::EvalReport::from_json(nlohmann::json::parse(read_text_file(cfg.reference)));
  put("report.txt", report::render_table(r.report, ref ? &*ref : nullptr));
  put("metrics.csv", report::metrics_csv(r.report));
  if (r.rf) {
    put("feature_mask.json", r.mask.to_json().dump(2) + "\n");
    put("rf_model.json",
        r.rf->pipeline.to_model(cfg.task, {{"config", r.rf->search.best.to_json()}}).to_json().dump() +
            "\n");
  }
  if (r.bigru) {
    put("bigru_log.csv", rnn::log_to_csv(r.bigru->log));
    put("bigru_model.json",
        rnn::to_model(r.bigru->model, cfg.task, {{"config", cfg.rnn.to_json()}}).to_json().dump() +
            "\n");
  }
  Manifest m;
  m.command = "experiment";
  m.config = cfg.to_json();
  m.seed = cfg.seed;
  m.inputs = inputs;
  if (!cfg.reference.empty()) m.inputs.push_back(cfg.reference);
  m.outputs = written;
  m.write(dir / "manifest.json");
  written.push_back(dir / "manifest.json");
  return written;
}

}  // namespace cursorprof::experiment

// cursorprof: command-line front end.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
// failure. With --error-json the error is also printed to stderr as one JSON
// object.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cursorprof/experiment.hpp"
#include "cursorprof/features.hpp"
#include "cursorprof/forest.hpp"
#include "cursorprof/gru.hpp"
#include "cursorprof/hash.hpp"
#include "cursorprof/io.hpp"
#include "cursorprof/model.hpp"
#include "cursorprof/noise.hpp"
#include "cursorprof/parallel.hpp"
#include "cursorprof/report.hpp"
#include "cursorprof/session.hpp"
#include "cursorprof/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cursorprof;
using experiment::RunConfig;

namespace {

void print_diagnostics(const Diagnostics& diags, std::size_t limit = 10) {
  for (std::size_t i = 0; i < diags.size() && i < limit; ++i) {
    std::cerr << "warning: ";
    if (diags[i].line) std::cerr << "line " << diags[i].line << ": ";
    std::cerr << diags[i].message << "\n";
  }
  if (diags.size() > limit) std::cerr << "warning: " << diags.size() - limit << " more\n";
}

fs::path manifest_path(const fs::path& output) {
  return output.string() + ".manifest.json";
}

void write_manifest(const std::string& command, const nlohmann::json& config, std::uint64_t seed,
                    std::vector<fs::path> inputs, std::vector<fs::path> outputs) {
  experiment::Manifest m;
  m.command = command;
  m.config = config;
  m.seed = seed;
  m.inputs = std::move(inputs);
  m.outputs = outputs;
  m.write(manifest_path(outputs.front()));
}

Dataset load_or_throw(const std::string& path, InputFormat format) {
  if (path.empty()) throw ConfigError("no input given");
  if (!fs::exists(path)) throw ConfigError("input not found: " + path);
  auto r = experiment::load_dataset(path, format);
  print_diagnostics(r.diagnostics);
  if (r.dataset.sessions.empty()) throw DataError("no sessions in " + path);
  return std::move(r.dataset);
}

// Flags shared by the commands driven by a RunConfig. Each flag that is
// given becomes a JSON patch applied over defaults, the --config file and
// the path environment variables, in that order.
struct RunFlags {
  std::string config_file;
  nlohmann::json patch = nlohmann::json::object();
  std::vector<std::function<void()>> collect;

  template <class T>
  void add(CLI::App* app, const std::string& flag, nlohmann::json::json_pointer ptr,
           const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(flag, *value, help);
    collect.push_back([this, opt, value, ptr] {
      if (opt->count()) patch[ptr] = *value;
    });
  }

  void add_bool(CLI::App* app, const std::string& flag, nlohmann::json::json_pointer ptr,
                bool value, const std::string& help) {
    auto* opt = app->add_flag(flag, help);
    collect.push_back([this, opt, ptr, value] {
      if (opt->count()) patch[ptr] = value;
    });
  }

  RunConfig resolve() {
    for (auto& f : collect) f();
    RunConfig cfg;
    if (!config_file.empty()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(read_text_file(config_file));
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + config_file + ": " + e.what());
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
      cfg.merge_json(j);
    }
    nlohmann::json env = nlohmann::json::object();
    for (auto [var, key] : {std::pair{"CURSORPROF_INPUT", "input"},
                            std::pair{"CURSORPROF_OUTPUT", "output"},
                            std::pair{"CURSORPROF_MODEL", "model"},
                            std::pair{"CURSORPROF_REFERENCE", "reference"}}) {
      if (const char* v = std::getenv(var); v && *v) env[key] = v;
    }
    cfg.merge_json(env);
    if (patch.contains("noise_events_per_gap") || patch.contains("noise_distribution")) {
      for (const char* key : {"distort_train", "distort_test"}) {
        if (!patch.contains(key) && cfg.to_json()[key].is_null()) continue;
        if (!patch.contains(key)) patch[key] = cfg.to_json()[key];
        if (patch.contains("noise_events_per_gap"))
          patch[key]["events_per_gap"] = patch["noise_events_per_gap"];
        if (patch.contains("noise_distribution"))
          patch[key]["distribution"] = patch["noise_distribution"];
      }
      patch.erase("noise_events_per_gap");
      patch.erase("noise_distribution");
    }
    cfg.merge_json(patch);
    return cfg;
  }
};

void add_common_run_flags(CLI::App* app, RunFlags& f, bool training) {
  using ptr = nlohmann::json::json_pointer;
  app->add_option("--config", f.config_file, "Run config file (JSON)");
  f.add<std::string>(app, "--task", ptr("/task"), "age or gender");
  f.add<std::string>(app, "--input,-i", ptr("/input"), "Input JSONL (.gz ok) or dataset directory");
  f.add<std::string>(app, "--input-format", ptr("/input_format"),
                     "canonical_jsonl or attentive_cursor_raw");
  f.add<std::uint64_t>(app, "--seed", ptr("/seed"), "Root seed");
  f.add<std::size_t>(app, "--min-coords", ptr("/split/min_coords"),
                     "Drop sessions with fewer mousemoves");
  if (!training) return;
  f.add<std::string>(app, "--rf-grid", ptr("/rf/grid"), "full (72 configs) or fast (2)");
  f.add<double>(app, "--rf-holdout", ptr("/rf/holdout_fraction"), "RF grid-search holdout");
  f.add<std::size_t>(app, "--hidden", ptr("/rnn/hidden"), "GRU units per direction");
  f.add<std::size_t>(app, "--max-len", ptr("/rnn/max_len"), "Sequence length T");
  f.add<std::size_t>(app, "--max-epochs", ptr("/rnn/max_epochs"), "Epoch cap");
  f.add<std::size_t>(app, "--patience", ptr("/rnn/early_stop_patience"), "Early-stopping patience");
  f.add<std::size_t>(app, "--batch-size", ptr("/rnn/batch_size"), "Mini-batch size");
  f.add<double>(app, "--learning-rate", ptr("/rnn/learning_rate"), "Adam learning rate");
  f.add<double>(app, "--dropout", ptr("/rnn/dropout"), "Dropout rate");
  f.add_bool(app, "--standardize-inputs", ptr("/rnn/standardize_inputs"), true,
             "Scale x, y, t by their RMS over training rows");
  f.add_bool(app, "--raw-inputs", ptr("/rnn/standardize_inputs"), false, "Feed raw px and ms");
  f.add_bool(app, "--mask-padding", ptr("/rnn/mask_padding"), true, "Skip padded timesteps");
  f.add<double>(app, "--corr-threshold", ptr("/features/corr_threshold"),
                "Feature filter |r| threshold");
}

int cmd_ingest(const std::string& input, const std::string& format, const std::string& raw_id,
               const std::string& output) {
  ParseResult r;
  if (fs::is_directory(input)) {
    r = import_attentive_cursor_dir(input);
  } else {
    if (!fs::exists(input)) throw ConfigError("input not found: " + input);
    r = parse_sessions_text(read_text_file(input), input_format_from(format),
                            raw_id.empty() ? fs::path(input).stem().string() : raw_id);
  }
  print_diagnostics(r.diagnostics);
  if (r.dataset.sessions.empty()) throw DataError("no sessions in " + input);
  write_text_file(output, serialize_dataset(r.dataset));
  std::cerr << r.dataset.sessions.size() << " sessions, " << r.diagnostics.size()
            << " diagnostics\n";
  write_manifest("ingest", {{"format", format}, {"raw_id", raw_id}, {"diagnostics", r.diagnostics.size()}},
                 0, {input}, {output});
  return 0;
}

int cmd_synth(const synth::SynthConfig& cfg, const std::string& output) {
  const auto d = synth::generate(cfg);
  write_text_file(output, serialize_dataset(d));
  nlohmann::json c = {{"n", cfg.n_sessions},
                      {"signal", cfg.signal_strength},
                      {"label", std::string(to_string(cfg.label))},
                      {"length", {cfg.length.mean, cfg.length.sd, cfg.length.min, cfg.length.max}},
                      {"viewport", {cfg.viewport_w, cfg.viewport_h}}};
  write_manifest("synth", c, cfg.seed, {}, {output});
  return 0;
}

int cmd_features(const std::string& input, const std::string& output, const std::string& mask_out,
                 bool filtered, std::size_t min_coords) {
  const Dataset d = filter_sessions(load_or_throw(input, InputFormat::canonical_jsonl), std::nullopt,
                                    min_coords)
                        .dataset;
  auto m = features::extract_matrix(d.sessions);
  std::vector<std::string> ids;
  for (const auto& s : d.sessions) ids.push_back(s.id);
  std::vector<fs::path> outputs{output};
  if (!mask_out.empty() || filtered) {
    const auto mask = features::fit_filter(m);
    if (!mask_out.empty()) {
      write_text_file(mask_out, mask.to_json().dump(2) + "\n");
      outputs.push_back(mask_out);
    }
    std::cerr << mask.names.size() << " of " << m.cols() << " features kept\n";
    if (filtered) m = features::apply_mask(m, mask);
  }
  write_text_file(output, features::to_csv(m, ids));
  write_manifest("features", {{"filtered", filtered}, {"min_coords", min_coords}}, 0, {input},
                 outputs);
  return 0;
}

struct Labeled {
  Dataset data;
  std::vector<int> y;
};

Labeled labeled(const RunConfig& cfg) {
  auto fr = filter_sessions(load_or_throw(cfg.input, cfg.format), cfg.task, cfg.min_coords);
  Labeled out{std::move(fr.dataset), {}};
  for (const auto& s : out.data.sessions) out.y.push_back(*label_of(s, cfg.task));
  if (out.y.empty()) throw DataError("no labelled sessions for task " + std::string(to_string(cfg.task)));
  return out;
}

int cmd_train_rf(RunFlags& flags) {
  RunConfig cfg = flags.resolve();
  cfg.validate(true);
  if (cfg.model.empty()) throw ConfigError("--model output path is required");
  const auto data = labeled(cfg);
  auto fit = experiment::fit_rf_pipeline(data.data.sessions, data.y, cfg);
  print_diagnostics(fit.search.diagnostics);
  save_model(cfg.model, fit.pipeline.to_model(cfg.task, {{"config", fit.search.best.to_json()},
                                                         {"seed", cfg.seed},
                                                         {"grid_scores", fit.search.scores}}));
  std::cerr << "best config " << fit.search.best.to_json().dump() << ", " << fit.pipeline.mask.names.size()
            << " features\n";
  write_manifest("train-rf", cfg.to_json(), cfg.seed, {cfg.input}, {cfg.model});
  return 0;
}

int cmd_train_rnn(RunFlags& flags, const std::string& log_path) {
  RunConfig cfg = flags.resolve();
  cfg.validate(true);
  if (cfg.model.empty()) throw ConfigError("--model output path is required");
  const auto data = labeled(cfg);
  std::vector<rnn::LabeledSequence> seqs;
  for (std::size_t i = 0; i < data.y.size(); ++i)
    seqs.push_back({to_sequence(data.data.sessions[i], cfg.rnn.max_len), data.y[i]});
  auto rnn_cfg = cfg.rnn;
  rnn_cfg.seed = cfg.seed;
  const auto tr = rnn::train_bigru(seqs, rnn_cfg);
  save_model(cfg.model, rnn::to_model(tr.model, cfg.task,
                                      {{"config", rnn_cfg.to_json()}, {"best_epoch", tr.best_epoch}}));
  std::vector<fs::path> outputs{cfg.model};
  if (!log_path.empty()) {
    write_text_file(log_path, rnn::log_to_csv(tr.log));
    outputs.push_back(log_path);
  }
  std::cerr << tr.log.size() << " epochs, best " << tr.best_epoch << "\n";
  write_manifest("train-rnn", cfg.to_json(), cfg.seed, {cfg.input}, outputs);
  return 0;
}

int cmd_eval(RunFlags& flags, const std::vector<std::string>& models) {
  RunConfig cfg = flags.resolve();
  cfg.validate(true);
  if (cfg.output.empty()) throw ConfigError("--output directory is required");
  if (models.empty() && cfg.model.empty()) throw ConfigError("no --model given");
  std::vector<std::string> paths = models;
  if (paths.empty()) paths.push_back(cfg.model);

  std::vector<TrainedModel> loaded;
  for (const auto& p : paths) loaded.push_back(load_model(p));
  for (const auto& m : loaded)
    if (m.task != loaded.front().task) throw ConfigError("models were trained for different tasks");
  cfg.task = loaded.front().task;
  const auto data = labeled(cfg);

  std::vector<report::ScoredClassifier> scored;
  for (const auto& m : loaded) {
    report::ScoredClassifier s{std::string(to_string(m.kind)), {}};
    switch (m.kind) {
      case ModelKind::zeror:
        s.scores.assign(data.y.size(), forest::zeror_from(m).score());
        break;
      case ModelKind::rf:
        s.scores = experiment::RfPipeline::from_model(m).predict(data.data.sessions);
        break;
      case ModelKind::bigru: {
        const auto net = rnn::bigru_from(m);
        std::vector<SequenceTensor> seqs;
        for (const auto& x : data.data.sessions) seqs.push_back(to_sequence(x, net.max_len));
        s.scores = net.predict(seqs);
        break;
      }
    }
    for (const auto& other : scored)
      if (other.name == s.name) s.name += "_" + std::to_string(scored.size());
    scored.push_back(std::move(s));
  }
  std::vector<std::string> ids;
  for (const auto& s : data.data.sessions) ids.push_back(s.id);
  auto rep = report::evaluate(cfg.task, ids, data.y, scored);
  rep.metadata = {{"models", paths}, {"dataset_sha256", sha256_hex(serialize_dataset(data.data))}};
  std::optional<report::EvalReport> ref;
  if (!cfg.reference.empty())
    ref = report::EvalReport::from_json(nlohmann::json::parse(read_text_file(cfg.reference)));
  const fs::path dir = cfg.output;
  write_text_file(dir / "report.json", rep.to_json().dump(2) + "\n");
  const auto table = report::render_table(rep, ref ? &*ref : nullptr);
  write_text_file(dir / "report.txt", table);
  write_text_file(dir / "metrics.csv", report::metrics_csv(rep));
  std::cout << table;
  std::vector<fs::path> inputs{cfg.input};
  for (const auto& p : paths) inputs.push_back(p);
  experiment::Manifest man{"eval", cfg.to_json(), cfg.seed, inputs,
                           {dir / "report.json", dir / "report.txt", dir / "metrics.csv"}};
  man.write(dir / "manifest.json");
  return 0;
}

int cmd_distort(const std::string& input, const std::string& output, const noise::NoiseConfig& nc,
                const std::string& provenance_path) {
  const Dataset d = load_or_throw(input, InputFormat::canonical_jsonl);
  std::vector<noise::SessionNoise> prov;
  const Dataset out = noise::distort_dataset(d, nc, &prov);
  write_text_file(output, serialize_dataset(out));
  std::vector<fs::path> outputs{output};
  std::size_t skipped = 0;
  for (const auto& p : prov) skipped += p.skipped;
  if (skipped) std::cerr << "warning: " << skipped << " insertions skipped (gap too narrow)\n";
  if (!provenance_path.empty()) {
    std::string text;
    for (const auto& p : prov) {
      nlohmann::ordered_json j;
      j["id"] = p.id;
      j["sigma"] = p.sigma;
      j["anchor"] = p.anchor;
      j["skipped"] = p.skipped;
      text += j.dump() + "\n";
    }
    write_text_file(provenance_path, text);
    outputs.push_back(provenance_path);
  }
  write_manifest("distort", nc.to_json(), nc.seed, {input}, outputs);
  return 0;
}

int cmd_experiment(RunFlags& flags, bool dump_config) {
  RunConfig cfg = flags.resolve();
  if (dump_config) {
    std::cout << cfg.to_json().dump(2) << "\n";
    return 0;
  }
  cfg.validate(true);
  if (cfg.output.empty()) throw ConfigError("--output directory is required");
  const Dataset data = load_or_throw(cfg.input, cfg.format);
  const auto r = experiment::run(data, cfg);
  print_diagnostics(r.report.diagnostics);
  experiment::write_outputs(r, cfg, {cfg.input});
  std::cout << read_text_file(fs::path(cfg.output) / "report.txt");
  return 0;
}

int error_exit(int code, std::string_view kind, const std::string& message, bool json) {
  std::cerr << "error: " << message << "\n";
  if (json) {
    nlohmann::json j = {{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
    std::cerr << j.dump() << "\n";
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mouse-cursor demographic profiling and adversarial cursor noise"};
  app.set_version_flag("--version", std::string(CURSORPROF_VERSION));
  app.require_subcommand(1);
  std::size_t threads = 0;
  bool error_json = false;
  app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");
  app.add_flag("--error-json", error_json, "Also print errors as JSON on stderr");

  // ingest
  std::string in_input, in_format = "canonical_jsonl", in_id, in_output;
  auto* ingest = app.add_subcommand("ingest", "Parse raw logs or JSONL into canonical JSONL");
  ingest->add_option("--input,-i", in_input, "Input file or dataset directory")->required();
  ingest->add_option("--format", in_format, "canonical_jsonl or attentive_cursor_raw");
  ingest->add_option("--id", in_id, "Session id for a single raw log");
  ingest->add_option("--output,-o", in_output, "Output JSONL")->required();

  // synth
  synth::SynthConfig sc;
  std::string sc_label = "gender", sc_output;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-signal dataset");
  synth_cmd->add_option("--n", sc.n_sessions, "Number of sessions");
  synth_cmd->add_option("--signal", sc.signal_strength, "Signal strength in [0, 1]");
  synth_cmd->add_option("--label", sc_label, "Task carrying the signal: age or gender");
  synth_cmd->add_option("--seed", sc.seed, "Seed");
  synth_cmd->add_option("--length-mean", sc.length.mean, "Mean mousemoves per session");
  synth_cmd->add_option("--length-sd", sc.length.sd, "SD of mousemoves per session");
  synth_cmd->add_option("--length-min", sc.length.min, "Minimum mousemoves");
  synth_cmd->add_option("--length-max", sc.length.max, "Maximum mousemoves");
  synth_cmd->add_option("--output,-o", sc_output, "Output JSONL")->required();

  // features
  std::string f_input, f_output, f_mask;
  bool f_filtered = false;
  std::size_t f_min = 10;
  auto* feat = app.add_subcommand("features", "Extract the feature battery to CSV");
  feat->add_option("--input,-i", f_input, "Input JSONL")->required();
  feat->add_option("--output,-o", f_output, "Output CSV")->required();
  feat->add_option("--mask-out", f_mask, "Fit the feature filter and write its mask");
  feat->add_flag("--filtered", f_filtered, "Write only the columns the filter keeps");
  feat->add_option("--min-coords", f_min, "Drop sessions with fewer mousemoves");

  // train-rf
  RunFlags rf_flags;
  auto* train_rf = app.add_subcommand("train-rf", "Grid-search and fit the random forest");
  add_common_run_flags(train_rf, rf_flags, true);
  rf_flags.add<std::string>(train_rf, "--model,-m", nlohmann::json::json_pointer("/model"),
                            "Output model file");

  // train-rnn
  RunFlags rnn_flags;
  std::string rnn_log;
  auto* train_rnn = app.add_subcommand("train-rnn", "Train the BiGRU");
  add_common_run_flags(train_rnn, rnn_flags, true);
  rnn_flags.add<std::string>(train_rnn, "--model,-m", nlohmann::json::json_pointer("/model"),
                             "Output model file");
  train_rnn->add_option("--log", rnn_log, "Per-epoch loss CSV");

  // eval
  RunFlags eval_flags;
  std::vector<std::string> eval_models;
  auto* eval = app.add_subcommand("eval", "Score saved models on a dataset");
  add_common_run_flags(eval, eval_flags, false);
  eval->add_option("--model,-m", eval_models, "Model file(s)");
  eval_flags.add<std::string>(eval, "--output,-o", nlohmann::json::json_pointer("/output"),
                              "Report directory");
  eval_flags.add<std::string>(eval, "--reference", nlohmann::json::json_pointer("/reference"),
                              "Report to compare against");

  // distort
  std::string d_input, d_output, d_sigma = "fixed:0.25", d_dist = "gaussian_radius", d_prov;
  noise::NoiseConfig nc;
  auto* distort = app.add_subcommand("distort", "Insert adversarial noise events");
  distort->add_option("--input,-i", d_input, "Input JSONL")->required();
  distort->add_option("--output,-o", d_output, "Output JSONL")->required();
  distort->add_option("--sigma", d_sigma, "fixed:S, uniform or uniform:LOW:HIGH");
  distort->add_option("--events-per-gap", nc.events_per_gap, "Synthetic events per genuine move");
  distort->add_option("--distribution", d_dist, "gaussian_radius or uniform_radius");
  distort->add_option("--seed", nc.seed, "Seed");
  distort->add_option("--provenance", d_prov, "Per-session sigma and anchor indices (JSONL)");

  // experiment
  RunFlags ex_flags;
  bool dump_config = false;
  auto* ex = app.add_subcommand("experiment", "Split, train all classifiers, evaluate, report");
  add_common_run_flags(ex, ex_flags, true);
  using ptr = nlohmann::json::json_pointer;
  ex_flags.add<std::string>(ex, "--output,-o", ptr("/output"), "Output directory");
  ex_flags.add<std::string>(ex, "--reference", ptr("/reference"), "Report to compare against");
  ex_flags.add<double>(ex, "--test-fraction", ptr("/split/test_fraction"), "Test split fraction");
  ex_flags.add<std::string>(ex, "--distort-test", ptr("/distort_test/sigma"),
                            "Noise the test split: fixed:S or uniform[:LOW:HIGH]");
  ex_flags.add<std::string>(ex, "--distort-train", ptr("/distort_train/sigma"),
                            "Noise the training split");
  ex_flags.add<std::size_t>(ex, "--events-per-gap", ptr("/noise_events_per_gap"),
                            "Synthetic events per genuine move");
  ex_flags.add<std::string>(ex, "--noise-distribution", ptr("/noise_distribution"),
                            "gaussian_radius or uniform_radius");
  ex_flags.add<std::vector<std::string>>(ex, "--classifiers", ptr("/classifiers"),
                                         "Subset of zeror rf bigru");
  ex->add_flag("--dump-config", dump_config, "Print the resolved config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return error_exit(1, "usage", e.what(), error_json);
  }

  try {
    set_max_threads(threads);
    if (*ingest) return cmd_ingest(in_input, in_format, in_id, in_output);
    if (*synth_cmd) {
      sc.label = task_from(sc_label);
      return cmd_synth(sc, sc_output);
    }
    if (*feat) return cmd_features(f_input, f_output, f_mask, f_filtered, f_min);
    if (*train_rf) return cmd_train_rf(rf_flags);
    if (*train_rnn) return cmd_train_rnn(rnn_flags, rnn_log);
    if (*eval) return cmd_eval(eval_flags, eval_models);
    if (*distort) {
      nc = noise::parse_sigma_spec(d_sigma, nc);
      nc.distribution = noise::distribution_from(d_dist);
      nc.validate();
      return cmd_distort(d_input, d_output, nc, d_prov);
    }
    if (*ex) return cmd_experiment(ex_flags, dump_config);
  } catch (const ConfigError& e) {
    return error_exit(1, "config", e.what(), error_json);
  } catch (const DataError& e) {
    return error_exit(2, "data", e.what(), error_json);
  } catch (const NumericError& e) {
    return error_exit(3, "numeric", e.what(), error_json);
  } catch (const nlohmann::json::exception& e) {
    return error_exit(2, "data", e.what(), error_json);
  } catch (const std::exception& e) {
    return error_exit(2, "data", e.what(), error_json);
  }
  return 1;
}

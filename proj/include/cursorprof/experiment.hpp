#pragma once

// End-to-end runs: filter -> split -> optional noise -> features and
// sequences -> ZeroR, random forest, BiGRU -> evaluation report.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cursorprof/features.hpp"
#include "cursorprof/forest.hpp"
#include "cursorprof/gru.hpp"
#include "cursorprof/noise.hpp"
#include "cursorprof/report.hpp"
#include "cursorprof/session.hpp"

namespace cursorprof::experiment {

inline constexpr std::string_view kRunConfigFormat = "cursorprof-run";

// Which RF grid to search: the full 72-point grid, or a two-point grid for
// quick runs.
enum class RfGrid { full, fast };

struct RunConfig {
  Task task = Task::gender;
  std::string input;   // JSONL (optionally .gz) or a dataset directory
  InputFormat format = InputFormat::canonical_jsonl;
  std::string output;  // directory
  std::string model;   // model path for train-*/eval
  std::string reference;  // optional report to compare against
  std::uint64_t seed = 0;

  double test_fraction = 0.10;
  bool stratify = true;
  std::size_t min_coords = 10;

  features::FeatureOptions features;
  features::FeatureFilterConfig filter;
  RfGrid rf_grid = RfGrid::full;
  double rf_holdout = 0.10;
  rnn::TrainConfig rnn;

  std::optional<noise::NoiseConfig> distort_train;
  std::optional<noise::NoiseConfig> distort_test;

  bool run_zeror = true;
  bool run_rf = true;
  bool run_bigru = true;

  // Throws ConfigError on invalid values. With check_paths, the input must
  // exist.
  void validate(bool check_paths = false) const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are a ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  // Overlays the keys present in j onto this config.
  void merge_json(const nlohmann::json& j);
};

std::string_view to_string(RfGrid g);
RfGrid rf_grid_from(std::string_view name);
std::vector<forest::RFConfig> make_grid(RfGrid g, std::size_t n_features, std::uint64_t seed);

// Loads a dataset from a file (canonical JSONL, .gz allowed) or a dataset
// directory.
ParseResult load_dataset(const std::filesystem::path& path, InputFormat format);

// A random forest bundled with the feature pipeline it was trained behind,
// so a saved model alone reproduces its scores.
struct RfPipeline {
  forest::RandomForest forest;
  features::FeatureMask mask;
  features::Bounds bounds;
  features::FeatureOptions options;

  std::vector<double> predict(std::span<const Session> sessions) const;
  TrainedModel to_model(Task task, nlohmann::json metadata = {}) const;
  static RfPipeline from_model(const TrainedModel& m);
};

// Extracts, filters and normalizes features on `train` and grid-searches a
// forest on them.
struct RfFit {
  RfPipeline pipeline;
  forest::GridSearchResult search;
};
RfFit fit_rf_pipeline(std::span<const Session> train, std::span<const int> y,
                      const RunConfig& cfg);

struct RunResult {
  report::EvalReport report;
  FilterCounts removed;
  features::FeatureMask mask;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::optional<RfFit> rf;
  std::optional<rnn::TrainResult> bigru;
  Diagnostics diagnostics;
};

// Runs the pipeline on an already loaded dataset. Every random draw derives
// from cfg.seed; the result does not depend on the thread count.
RunResult run(const Dataset& data, const RunConfig& cfg);

// Files written next to the outputs of each command. The timestamp lives
// here only, so reports stay byte-identical across reruns.
struct Manifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;

  // Hashes every input and output file that exists.
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

// Writes report.json, report.txt, metrics.csv, the BiGRU training log and
// manifest.json into cfg.output; returns the written paths.
std::vector<std::filesystem::path> write_outputs(const RunResult& r, const RunConfig& cfg,
                                                 const std::vector<std::filesystem::path>& inputs);

}  // namespace cursorprof::experiment

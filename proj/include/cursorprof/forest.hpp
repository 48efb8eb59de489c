#pragma once

// Baseline classifiers: ZeroR and a CART random forest with held-out grid
// search.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cursorprof/error.hpp"
#include "cursorprof/features.hpp"
#include "cursorprof/model.hpp"

namespace cursorprof::forest {

// Always predicts the majority class; a 50/50 tie goes to class 1.
struct ZeroR {
  int majority = 1;

  double score() const { return majority == 1 ? 1.0 : 0.0; }
  int predict() const { return majority; }
};

ZeroR train_zeror(std::span<const int> labels);

struct RFConfig {
  std::size_t n_trees = 100;
  std::size_t max_features = 0;        // per split; 0 means floor(sqrt(d))
  std::size_t min_node_size = 1;       // minimum samples in a terminal node
  std::size_t max_terminal_nodes = 0;  // 0 means unlimited
  // Minimum weighted Gini decrease, (n_node / n_root) * (G - G_children),
  // for a split to be accepted. Our reading of the unexplained
  // "epsilon-threshold" hyperparameter.
  double min_impurity_decrease = 0.0;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  bool operator==(const RFConfig&) const = default;
  nlohmann::json to_json() const;
  static RFConfig from_json(const nlohmann::json& j);
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // class-1 proportion of the training samples here
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  std::size_t leaf_count() const;
};

struct RandomForest {
  std::size_t n_features = 0;
  std::vector<Tree> trees;
  // Set when training saw a single class; every score equals it.
  std::optional<double> constant;

  // Mean of the per-tree class-1 leaf proportions, in [0, 1].
  double predict(std::span<const double> x) const;
  std::vector<double> predict(const features::FeatureMatrix& m) const;

  nlohmann::json to_json() const;
  static RandomForest from_json(const nlohmann::json& j);
};

// Trees are trained in parallel; tree i draws only from substream
// ("bootstrap", i) of cfg.seed, so results do not depend on thread count.
RandomForest train_rf(const features::FeatureMatrix& x, std::span<const int> y,
                      const RFConfig& cfg, Diagnostics* diags = nullptr);

// n_trees {100, 300, 500} x max_features {sqrt d, d/3} x min_node_size
// {1, 5, 10} x max_terminal_nodes {unlimited, 64} x epsilon {0, 1e-4}.
std::vector<RFConfig> default_grid(std::size_t n_features, std::uint64_t seed);

struct GridSearchResult {
  RFConfig best;
  RandomForest model;
  std::vector<double> scores;  // selection AUC per grid entry
  bool used_cross_validation = false;
  Diagnostics diagnostics;
};

// Holds out holdout_fraction of the training rows (stratified, substream
// "holdout"), picks the config with the highest held-out AUC (earlier entry
// on ties), then refits it on all training rows. Falls back to stratified
// 5-fold selection when the holdout cannot contain both classes.
GridSearchResult grid_search_rf(const features::FeatureMatrix& x, std::span<const int> y,
                                const std::vector<RFConfig>& grid,
                                double holdout_fraction = 0.10, std::uint64_t seed = 0);

TrainedModel to_model(const ZeroR& z, Task task, nlohmann::json metadata = {});
TrainedModel to_model(const RandomForest& f, Task task, nlohmann::json metadata = {});
ZeroR zeror_from(const TrainedModel& m);
RandomForest forest_from(const TrainedModel& m);

}  // namespace cursorprof::forest

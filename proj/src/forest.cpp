#include "cursorprof/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cursorprof/metrics.hpp"
#include "cursorprof/parallel.hpp"
#include "cursorprof/rng.hpp"

namespace cursorprof::forest {

using features::FeatureMatrix;

ZeroR train_zeror(std::span<const int> labels) {
  if (labels.empty()) throw PreconditionError("ZeroR needs at least one label");
  std::size_t ones = 0;
  for (int y : labels) ones += y == 1;
  return ZeroR{2 * ones >= labels.size() ? 1 : 0};
}

nlohmann::json RFConfig::to_json() const {
  return {{"n_trees", n_trees},
          {"max_features", max_features},
          {"min_node_size", min_node_size},
          {"max_terminal_nodes", max_terminal_nodes},
          {"min_impurity_decrease", min_impurity_decrease},
          {"bootstrap", bootstrap},
          {"seed", seed}};
}

RFConfig RFConfig::from_json(const nlohmann::json& j) {
  RFConfig c;
  c.n_trees = j.value("n_trees", c.n_trees);
  c.max_features = j.value("max_features", c.max_features);
  c.min_node_size = j.value("min_node_size", c.min_node_size);
  c.max_terminal_nodes = j.value("max_terminal_nodes", c.max_terminal_nodes);
  c.min_impurity_decrease = j.value("min_impurity_decrease", c.min_impurity_decrease);
  c.bootstrap = j.value("bootstrap", c.bootstrap);
  c.seed = j.value("seed", c.seed);
  return c;
}

double Tree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

double RandomForest::predict(std::span<const double> x) const {
  if (constant) return *constant;
  if (x.size() != n_features) throw DataError("feature count does not match the forest");
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x);
  return s / static_cast<double>(trees.size());
}

std::vector<double> RandomForest::predict(const FeatureMatrix& m) const {
  std::vector<double> out(m.rows);
  parallel_for(m.rows, [&](std::size_t r) { out[r] = predict(m.row(r)); });
  return out;
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double decrease = 0.0;
};

struct Pending {
  std::vector<std::size_t> samples;
  std::size_t node = 0;
  Split split;
};

double gini(double pos, double n) {
  if (n <= 0.0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, std::span<const int> y, const RFConfig& cfg, Rng& rng,
              std::size_t root_size)
      : x_(x), y_(y), cfg_(cfg), rng_(rng), root_size_(static_cast<double>(root_size)) {
    const std::size_t d = x.cols();
    mtry_ = cfg.max_features == 0
                ? std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))))
                : std::min(cfg.max_features, d);
    feature_order_.resize(d);
    std::iota(feature_order_.begin(), feature_order_.end(), std::size_t{0});
  }

  Tree build(std::vector<std::size_t> root) {
    Tree tree;
    std::vector<Pending> frontier;
    frontier.push_back(make_leaf(tree, std::move(root)));
    std::size_t leaves = 1;
    for (;;) {
      if (cfg_.max_terminal_nodes > 0 && leaves >= cfg_.max_terminal_nodes) break;
      std::size_t best = frontier.size();
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        if (frontier[i].split.feature < 0) continue;
        if (best == frontier.size() || frontier[i].split.decrease > frontier[best].split.decrease)
          best = i;
      }
      if (best == frontier.size()) break;
      Pending p = std::move(frontier[best]);
      frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(best));
      std::vector<std::size_t> left, right;
      const auto f = static_cast<std::size_t>(p.split.feature);
      for (std::size_t s : p.samples) (x_.at(s, f) <= p.split.threshold ? left : right).push_back(s);
      tree.nodes[p.node].feature = p.split.feature;
      tree.nodes[p.node].threshold = p.split.threshold;
      Pending l = make_leaf(tree, std::move(left));
      tree.nodes[p.node].left = static_cast<int>(l.node);
      Pending r = make_leaf(tree, std::move(right));
      tree.nodes[p.node].right = static_cast<int>(r.node);
      frontier.push_back(std::move(l));
      frontier.push_back(std::move(r));
      ++leaves;
    }
    return tree;
  }

 private:
  Pending make_leaf(Tree& tree, std::vector<std::size_t> samples) {
    Pending p;
    p.node = tree.nodes.size();
    double pos = 0.0;
    for (std::size_t s : samples) pos += y_[s];
    TreeNode node;
    node.value = samples.empty() ? 0.0 : pos / static_cast<double>(samples.size());
    tree.nodes.push_back(node);
    p.split = best_split(samples, pos);
    p.samples = std::move(samples);
    return p;
  }

  Split best_split(const std::vector<std::size_t>& samples, double pos) {
    Split best;
    const std::size_t m = samples.size();
    if (m < 2 * std::max<std::size_t>(1, cfg_.min_node_size)) return best;
    if (pos == 0.0 || pos == static_cast<double>(m)) return best;
    const double md = static_cast<double>(m);
    const double parent = gini(pos, md);
    const std::size_t min_leaf = std::max<std::size_t>(1, cfg_.min_node_size);

    // Partial Fisher-Yates: the first mtry_ entries are this node's features.
    for (std::size_t k = 0; k < mtry_; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, feature_order_.size() - 1);
      std::swap(feature_order_[k], feature_order_[pick(rng_)]);
    }
    std::vector<std::pair<double, int>> vals(m);
    for (std::size_t k = 0; k < mtry_; ++k) {
      const std::size_t f = feature_order_[k];
      for (std::size_t i = 0; i < m; ++i) vals[i] = {x_.at(samples[i], f), y_[samples[i]]};
      std::sort(vals.begin(), vals.end());
      double left_pos = 0.0;
      for (std::size_t i = 1; i < m; ++i) {
        left_pos += vals[i - 1].second;
        if (vals[i - 1].first == vals[i].first) continue;
        if (i < min_leaf || m - i < min_leaf) continue;
        const double nl = static_cast<double>(i);
        const double nr = md - nl;
        const double child = (nl / md) * gini(left_pos, nl) + (nr / md) * gini(pos - left_pos, nr);
        const double decrease = (md / root_size_) * (parent - child);
        if (decrease > best.decrease) {
          const double a = vals[i - 1].first, b = vals[i].first;
          double thr = a + (b - a) / 2.0;
          if (!(thr < b)) thr = a;
          best = {static_cast<int>(f), thr, decrease};
        }
      }
    }
    if (best.feature >= 0 && best.decrease < cfg_.min_impurity_decrease) return Split{};
    return best;
  }

  const FeatureMatrix& x_;
  std::span<const int> y_;
  const RFConfig& cfg_;
  Rng& rng_;
  double root_size_;
  std::size_t mtry_ = 1;
  std::vector<std::size_t> feature_order_;
};

FeatureMatrix select_rows(const FeatureMatrix& x, std::span<const std::size_t> rows) {
  FeatureMatrix out;
  out.names = x.names;
  out.rows = rows.size();
  out.data.reserve(rows.size() * x.cols());
  for (std::size_t r : rows) {
    const auto row = x.row(r);
    out.data.insert(out.data.end(), row.begin(), row.end());
  }
  return out;
}

std::vector<int> select(std::span<const int> y, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(y[r]);
  return out;
}

bool both_classes(std::span<const int> y) {
  bool zero = false, one = false;
  for (int v : y) (v == 1 ? one : zero) = true;
  return zero && one;
}

double score_config(const FeatureMatrix& x, std::span<const int> y, const RFConfig& cfg,
                    std::span<const std::size_t> fit, std::span<const std::size_t> eval) {
  const auto fx = select_rows(x, fit);
  const auto fy = select(y, fit);
  const auto ex = select_rows(x, eval);
  const auto ey = select(y, eval);
  const RandomForest f = train_rf(fx, fy, cfg);
  return metrics::roc_auc(ey, f.predict(ex));
}

}  // namespace

RandomForest train_rf(const FeatureMatrix& x, std::span<const int> y, const RFConfig& cfg,
                      Diagnostics* diags) {
  if (x.rows == 0 || x.rows != y.size()) throw DataError("train_rf: X and y disagree in length");
  if (cfg.n_trees == 0 || cfg.min_node_size == 0) throw ConfigError("RF counts must be positive");
  if (cfg.max_features > x.cols()) throw ConfigError("max_features exceeds the feature count");
  RandomForest forest;
  forest.n_features = x.cols();
  std::size_t ones = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw DataError("labels must be 0 or 1");
    ones += v == 1;
  }
  if (ones == 0 || ones == y.size()) {
    forest.constant = ones == 0 ? 0.0 : 1.0;
    if (diags) diags->push_back({0, "training labels contain a single class; forest is constant"});
    return forest;
  }
  forest.trees.resize(cfg.n_trees);
  parallel_for(cfg.n_trees, [&](std::size_t t) {
    Rng rng = make_rng(cfg.seed, stream::kBootstrap, t);
    std::vector<std::size_t> sample(x.rows);
    if (cfg.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, x.rows - 1);
      for (auto& s : sample) s = pick(rng);
    } else {
      std::iota(sample.begin(), sample.end(), std::size_t{0});
    }
    TreeBuilder builder(x, y, cfg, rng, sample.size());
    forest.trees[t] = builder.build(std::move(sample));
  });
  return forest;
}

std::vector<RFConfig> default_grid(std::size_t n_features, std::uint64_t seed) {
  const std::size_t d = std::max<std::size_t>(1, n_features);
  const std::size_t sqrt_d = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
  const std::size_t third = std::max<std::size_t>(1, d / 3);
  std::vector<RFConfig> grid;
  for (std::size_t trees : {100, 300, 500})
    for (std::size_t mf : {sqrt_d, third})
      for (std::size_t node : {1, 5, 10})
        for (std::size_t leaves : {0, 64})
          for (double eps : {0.0, 1e-4}) {
            RFConfig c;
            c.n_trees = trees;
            c.max_features = mf;
            c.min_node_size = node;
            c.max_terminal_nodes = leaves;
            c.min_impurity_decrease = eps;
            c.seed = seed;
            grid.push_back(c);
          }
  return grid;
}

GridSearchResult grid_search_rf(const FeatureMatrix& x, std::span<const int> y,
                                const std::vector<RFConfig>& grid, double holdout_fraction,
                                std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("RF grid is empty");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ConfigError("holdout_fraction must lie in (0, 1)");
  if (x.rows != y.size()) throw DataError("grid_search_rf: X and y disagree in length");
  GridSearchResult out;
  out.scores.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());

  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i] == 1 ? 1 : 0].push_back(i);
  Rng rng = make_rng(seed, stream::kHoldout);
  for (auto& c : by_class) std::shuffle(c.begin(), c.end(), rng);

  std::vector<std::size_t> hold, fit;
  for (const auto& c : by_class) {
    const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(c.size()) * holdout_fraction));
    hold.insert(hold.end(), c.begin(), c.begin() + static_cast<std::ptrdiff_t>(std::min(k, c.size())));
    fit.insert(fit.end(), c.begin() + static_cast<std::ptrdiff_t>(std::min(k, c.size())), c.end());
  }
  std::sort(hold.begin(), hold.end());
  std::sort(fit.begin(), fit.end());

  const bool usable = grid.size() == 1 ||
                      (both_classes(select(y, hold)) && both_classes(select(y, fit)));
  if (grid.size() > 1 && usable) {
    for (std::size_t g = 0; g < grid.size(); ++g) out.scores[g] = score_config(x, y, grid[g], fit, hold);
  } else if (grid.size() > 1) {
    out.used_cross_validation = true;
    out.diagnostics.push_back({0, "holdout cannot hold both classes; using stratified 5-fold selection"});
    constexpr std::size_t kFolds = 5;
    std::array<std::vector<std::size_t>, kFolds> folds;
    for (const auto& c : by_class)
      for (std::size_t i = 0; i < c.size(); ++i) folds[i % kFolds].push_back(c[i]);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double total = 0.0;
      std::size_t valid = 0;
      for (std::size_t k = 0; k < kFolds; ++k) {
        std::vector<std::size_t> train_rows;
        for (std::size_t q = 0; q < kFolds; ++q)
          if (q != k) train_rows.insert(train_rows.end(), folds[q].begin(), folds[q].end());
        std::sort(train_rows.begin(), train_rows.end());
        std::vector<std::size_t> eval_rows = folds[k];
        std::sort(eval_rows.begin(), eval_rows.end());
        if (!both_classes(select(y, eval_rows))) continue;
        const double auc = score_config(x, y, grid[g], train_rows, eval_rows);
        if (std::isnan(auc)) continue;
        total += auc;
        ++valid;
      }
      if (valid > 0) out.scores[g] = total / static_cast<double>(valid);
    }
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const double s = out.scores[g];
    const double b = out.scores[best];
    if (!std::isnan(s) && (std::isnan(b) || s > b)) best = g;
  }
  out.best = grid[best];
  out.model = train_rf(x, y, out.best, &out.diagnostics);
  return out;
}

nlohmann::json RandomForest::to_json() const {
  nlohmann::json j;
  j["n_features"] = n_features;
  if (constant) j["constant"] = *constant;
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : trees) {
    nlohmann::json feature = nlohmann::json::array(), thr = nlohmann::json::array(),
                   left = nlohmann::json::array(), right = nlohmann::json::array(),
                   value = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      thr.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
    }
    ts.push_back({{"feature", feature}, {"threshold", thr}, {"left", left}, {"right", right}, {"value", value}});
  }
  j["trees"] = std::move(ts);
  return j;
}

RandomForest RandomForest::from_json(const nlohmann::json& j) {
  RandomForest f;
  f.n_features = j.at("n_features").get<std::size_t>();
  if (j.contains("constant")) f.constant = j["constant"].get<double>();
  for (const auto& t : j.at("trees")) {
    Tree tree;
    const auto feature = t.at("feature").get<std::vector<int>>();
    const auto thr = t.at("threshold").get<std::vector<double>>();
    const auto left = t.at("left").get<std::vector<int>>();
    const auto right = t.at("right").get<std::vector<int>>();
    const auto value = t.at("value").get<std::vector<double>>();
    const std::size_t n = feature.size();
    if (thr.size() != n || left.size() != n || right.size() != n || value.size() != n || n == 0)
      throw DataError("malformed tree in model file");
    for (std::size_t i = 0; i < n; ++i) {
      const bool leaf = feature[i] < 0;
      const auto valid = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(n); };
      if (!leaf && (feature[i] >= static_cast<int>(f.n_features) || !valid(left[i]) || !valid(right[i])))
        throw DataError("malformed tree in model file");
      tree.nodes.push_back({feature[i], thr[i], left[i], right[i], value[i]});
    }
    f.trees.push_back(std::move(tree));
  }
  if (!f.constant && f.trees.empty()) throw DataError("forest has no trees");
  return f;
}

TrainedModel to_model(const ZeroR& z, Task task, nlohmann::json metadata) {
  return {ModelKind::zeror, task, {{"majority", z.majority}}, std::move(metadata)};
}

TrainedModel to_model(const RandomForest& f, Task task, nlohmann::json metadata) {
  return {ModelKind::rf, task, f.to_json(), std::move(metadata)};
}

ZeroR zeror_from(const TrainedModel& m) {
  if (m.kind != ModelKind::zeror) throw DataError("model is not ZeroR");
  const int maj = m.parameters.at("majority").get<int>();
  if (maj != 0 && maj != 1) throw DataError("ZeroR majority must be 0 or 1");
  return ZeroR{maj};
}

RandomForest forest_from(const TrainedModel& m) {
  if (m.kind != ModelKind::rf) throw DataError("model is not a random forest");
  return RandomForest::from_json(m.parameters);
}

}  // namespace cursorprof::forest

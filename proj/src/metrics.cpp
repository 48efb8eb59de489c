#include "cursorprof/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace cursorprof::metrics {
namespace {

void check_labels(std::span<const int> y_true, std::size_t other) {
  if (y_true.empty()) throw DataError("metric on empty input");
  if (y_true.size() != other) throw DataError("metric inputs differ in length");
}

double safe_div(double a, double b, const char* what, int cls, Diagnostics* diags) {
  if (b == 0.0) {
    if (diags)
      diags->push_back({0, std::string(what) + " undefined for class " + std::to_string(cls) +
                               ", counted as 0"});
    return 0.0;
  }
  return a / b;
}

}  // namespace

Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  check_labels(y_true, y_pred.size());
  Confusion c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if ((y_true[i] != 0 && y_true[i] != 1) || (y_pred[i] != 0 && y_pred[i] != 1))
      throw DataError("labels must be 0 or 1");
    ++c.counts[y_true[i]][y_pred[i]];
  }
  return c;
}

WeightedPRF weighted_prf(std::span<const int> y_true, std::span<const int> y_pred,
                         Diagnostics* diags) {
  const Confusion c = confusion(y_true, y_pred);
  const double n = static_cast<double>(y_true.size());
  WeightedPRF out;
  for (int k = 0; k < 2; ++k) {
    const double tp = static_cast<double>(c.counts[k][k]);
    const double support = static_cast<double>(c.counts[k][0] + c.counts[k][1]);
    const double predicted = static_cast<double>(c.counts[0][k] + c.counts[1][k]);
    const double p = safe_div(tp, predicted, "precision", k, diags);
    const double r = safe_div(tp, support, "recall", k, diags);
    const double f = safe_div(2.0 * p * r, p + r, "f1", k, diags);
    const double w = support / n;
    out.precision += w * p;
    out.recall += w * r;
    out.f1 += w * f;
  }
  return out;
}

double accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  check_labels(y_true, y_pred.size());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hit += y_true[i] == y_pred[i];
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

double roc_auc(std::span<const int> y_true, std::span<const double> scores, Diagnostics* diags) {
  check_labels(y_true, scores.size());
  std::vector<std::size_t> idx(y_true.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the concordance count, kept integral so the result is the exact
  // rational (2C) / (2PN) rounded once.
  std::uint64_t twice = 0;
  std::uint64_t neg_below = 0;
  std::uint64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (y_true[idx[j]] == 1 ? gp : gn) += 1;
      ++j;
    }
    twice += gp * (2 * neg_below + gn);
    neg_below += gn;
    pos += gp;
    neg += gn;
    i = j;
  }
  if (pos == 0 || neg == 0) {
    if (diags) diags->push_back({0, "ROC AUC undefined: only one class present"});
    return std::numeric_limits<double>::quiet_NaN();
  }
  return static_cast<double>(twice) / static_cast<double>(2 * pos * neg);
}

std::vector<RocPoint> roc_curve(std::span<const int> y_true, std::span<const double> scores) {
  check_labels(y_true, scores.size());
  std::vector<std::size_t> idx(y_true.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double pos = 0, neg = 0;
  for (int y : y_true) (y == 1 ? pos : neg) += 1;
  std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == s) {
      (y_true[idx[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    out.push_back({s, neg > 0 ? fp / neg : 0.0, pos > 0 ? tp / pos : 0.0});
  }
  return out;
}

std::vector<int> threshold(std::span<const double> scores, double cut) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > cut ? 1 : 0;
  return out;
}

std::vector<double> holm_adjust(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> out(m);
  double running = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double adj = std::min(1.0, static_cast<double>(m - k) * p[order[k]]);
    running = std::max(running, adj);
    out[order[k]] = running;
  }
  return out;
}

double two_proportion_p(double p1, std::size_t n1, double p2, std::size_t n2, Diagnostics* diags) {
  if (n1 == 0 || n2 == 0) throw DataError("two-proportion test needs non-empty samples");
  const double a = static_cast<double>(n1), b = static_cast<double>(n2);
  const double pooled = (p1 * a + p2 * b) / (a + b);
  const double var = pooled * (1.0 - pooled) * (1.0 / a + 1.0 / b);
  if (!(var > 0.0)) {
    if (diags) diags->push_back({0, "zero-variance proportions, p set to 1"});
    return 1.0;
  }
  const double z = (p1 - p2) / std::sqrt(var);
  return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

PairwiseTests pairwise_proportion_tests(const std::vector<std::string>& classifiers,
                                        const std::map<std::string, std::vector<double>>& proportions,
                                        std::size_t n, double alpha) {
  const std::size_t k = classifiers.size();
  if (k < 2) throw PreconditionError("pairwise tests need at least 2 classifiers");
  PairwiseTests out;
  out.classifiers = classifiers;
  out.alpha = alpha;
  for (const auto& [family, values] : proportions) {
    if (values.size() != k) throw DataError("family '" + family + "' has the wrong arity");
    std::vector<double> raw;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        Diagnostics local;
        raw.push_back(two_proportion_p(values[i], n, values[j], n, &local));
        for (auto& d : local) {
          d.message = family + " " + classifiers[i] + " vs " + classifiers[j] + ": " + d.message;
          out.diagnostics.push_back(std::move(d));
        }
        pairs.emplace_back(i, j);
      }
    }
    const auto adj = holm_adjust(raw);
    auto& a = out.adjusted[family];
    auto& r = out.raw[family];
    a.assign(k, std::vector<double>(k, 1.0));
    r.assign(k, std::vector<double>(k, 1.0));
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      const auto [i, j] = pairs[q];
      a[i][j] = a[j][i] = adj[q];
      r[i][j] = r[j][i] = raw[q];
    }
  }
  return out;
}

nlohmann::json PairwiseTests::to_json() const {
  nlohmann::json j;
  j["classifiers"] = classifiers;
  j["alpha"] = alpha;
  j["test"] = "two-proportion pooled z-test, Holm-adjusted within each family";
  j["adjusted_p"] = adjusted;
  j["raw_p"] = raw;
  return j;
}

}  // namespace cursorprof::metrics

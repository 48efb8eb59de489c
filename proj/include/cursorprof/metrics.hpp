#pragma once

// Classification metrics, ROC analysis and pairwise significance tests.

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cursorprof/error.hpp"

namespace cursorprof::metrics {

// Per-class metrics averaged with weights equal to class support.
struct WeightedPRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Labels are 0/1. Per-class values with a zero denominator count as 0 and
// add a diagnostic. Throws DataError on empty or mismatched input.
WeightedPRF weighted_prf(std::span<const int> y_true, std::span<const int> y_pred,
                         Diagnostics* diags = nullptr);

// counts[true_class][predicted_class]
struct Confusion {
  std::array<std::array<std::size_t, 2>, 2> counts{};
};

Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred);

double accuracy(std::span<const int> y_true, std::span<const int> y_pred);

// Probability that a random positive outscores a random negative, ties
// counting one half. NaN plus a diagnostic when only one class is present.
double roc_auc(std::span<const int> y_true, std::span<const double> scores,
               Diagnostics* diags = nullptr);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// One point per distinct score, from (0, 0) up to (1, 1).
std::vector<RocPoint> roc_curve(std::span<const int> y_true, std::span<const double> scores);

// Predicted class 1 iff score > 0.5.
std::vector<int> threshold(std::span<const double> scores, double cut = 0.5);

// Holm step-down adjustment; adjusted values are monotone in the order of
// the raw p-values and capped at 1.
std::vector<double> holm_adjust(std::span<const double> p);

// Pooled two-sided two-proportion z-test. Returns 1 with a diagnostic when
// the pooled proportion is 0 or 1.
double two_proportion_p(double p1, std::size_t n1, double p2, std::size_t n2,
                        Diagnostics* diags = nullptr);

// Holm-adjusted p-values for every classifier pair within each metric
// family. matrix[i][j] == matrix[j][i]; the diagonal is 1.
struct PairwiseTests {
  std::vector<std::string> classifiers;
  std::map<std::string, std::vector<std::vector<double>>> adjusted;
  std::map<std::string, std::vector<std::vector<double>>> raw;
  double alpha = 0.05;
  Diagnostics diagnostics;

  nlohmann::json to_json() const;
};

// proportions[family][k] is classifier k's value for that family, all
// measured on the same n test samples.
PairwiseTests pairwise_proportion_tests(
    const std::vector<std::string>& classifiers,
    const std::map<std::string, std::vector<double>>& proportions, std::size_t n,
    double alpha = 0.05);

}  // namespace cursorprof::metrics

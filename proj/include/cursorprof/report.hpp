#pragma once

// Evaluation reports: per-classifier metrics on one test set plus pairwise
// significance tests, rendered as JSON, a text table and CSV.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cursorprof/metrics.hpp"
#include "cursorprof/session.hpp"

namespace cursorprof::report {

struct ClassifierResult {
  std::string name;
  metrics::WeightedPRF prf;
  double auc = 0.0;
  double accuracy = 0.0;
  metrics::Confusion confusion;
  std::vector<double> scores;  // P(class 1), aligned with EvalReport::ids
};

struct EvalReport {
  Task task = Task::gender;
  std::vector<std::string> ids;
  std::vector<int> y_true;
  std::vector<ClassifierResult> classifiers;
  metrics::PairwiseTests tests;
  Diagnostics diagnostics;
  nlohmann::json metadata = nlohmann::json::object();

  const ClassifierResult& get(std::string_view name) const;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

struct ScoredClassifier {
  std::string name;
  std::vector<double> scores;
};

// Thresholds scores at 0.5 and computes every metric. The pairwise tests
// cover the families precision, recall, f1 and auc.
EvalReport evaluate(Task task, std::vector<std::string> ids, std::vector<int> y_true,
                    const std::vector<ScoredClassifier>& scored, double alpha = 0.05);

// One block per classifier: metric, value and, with a reference report,
// the relative change in percent. Followed by the adjusted p-value matrices.
std::string render_table(const EvalReport& r, const EvalReport* reference = nullptr);

// classifier,precision,recall,f1,auc,accuracy
std::string metrics_csv(const EvalReport& r);

}  // namespace cursorprof::report

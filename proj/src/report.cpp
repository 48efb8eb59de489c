#include "cursorprof/report.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace cursorprof::report {
namespace {

const char* const kFamilies[] = {"precision", "recall", "f1", "auc"};

std::string fixed(double v, int digits = 3) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string change(double value, double ref) {
  if (!(ref != 0.0) || std::isnan(value) || std::isnan(ref)) return "n/a";
  const double pct = 100.0 * (value - ref) / ref;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.1f%%", pct);
  return buf;
}

nlohmann::json nan_safe(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::nan("") : j.get<double>();
}

}  // namespace

const ClassifierResult& EvalReport::get(std::string_view name) const {
  for (const auto& c : classifiers)
    if (c.name == name) return c;
  throw DataError("report has no classifier '" + std::string(name) + "'");
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["format"] = "cursorprof-report";
  j["version"] = 1;
  j["task"] = std::string(to_string(task));
  j["n_test"] = y_true.size();
  j["ids"] = ids;
  j["y_true"] = y_true;
  j["classifiers"] = nlohmann::json::array();
  for (const auto& c : classifiers) {
    const auto& k = c.confusion.counts;
    j["classifiers"].push_back({{"name", c.name},
                                {"precision", c.prf.precision},
                                {"recall", c.prf.recall},
                                {"f1", c.prf.f1},
                                {"auc", nan_safe(c.auc)},
                                {"accuracy", c.accuracy},
                                {"confusion", {{k[0][0], k[0][1]}, {k[1][0], k[1][1]}}},
                                {"scores", c.scores}});
  }
  j["pairwise_tests"] = tests.to_json();
  nlohmann::json diags = nlohmann::json::array();
  for (const auto& d : diagnostics) diags.push_back(d.message);
  j["diagnostics"] = diags;
  j["metadata"] = metadata;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cursorprof-report") throw DataError("not a cursorprof report");
  EvalReport r;
  r.task = task_from(j.at("task").get<std::string>());
  r.ids = j.at("ids").get<std::vector<std::string>>();
  r.y_true = j.at("y_true").get<std::vector<int>>();
  for (const auto& c : j.at("classifiers")) {
    ClassifierResult out;
    out.name = c.at("name").get<std::string>();
    out.prf = {c.at("precision").get<double>(), c.at("recall").get<double>(),
               c.at("f1").get<double>()};
    out.auc = number_or_nan(c.at("auc"));
    out.accuracy = c.at("accuracy").get<double>();
    const auto m = c.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) out.confusion.counts[a][b] = m.at(a).at(b);
    out.scores = c.at("scores").get<std::vector<double>>();
    r.classifiers.push_back(std::move(out));
  }
  const auto& t = j.at("pairwise_tests");
  r.tests.classifiers = t.at("classifiers").get<std::vector<std::string>>();
  r.tests.alpha = t.at("alpha").get<double>();
  for (const auto& [family, m] : t.at("adjusted_p").items())
    r.tests.adjusted[family] = m.get<std::vector<std::vector<double>>>();
  for (const auto& [family, m] : t.at("raw_p").items())
    r.tests.raw[family] = m.get<std::vector<std::vector<double>>>();
  for (const auto& d : j.value("diagnostics", nlohmann::json::array()))
    r.diagnostics.push_back({0, d.get<std::string>()});
  r.metadata = j.value("metadata", nlohmann::json::object());
  return r;
}

EvalReport evaluate(Task task, std::vector<std::string> ids, std::vector<int> y_true,
                    const std::vector<ScoredClassifier>& scored, double alpha) {
  if (y_true.empty()) throw DataError("cannot evaluate on an empty test set");
  if (ids.size() != y_true.size()) throw DataError("ids and labels differ in length");
  EvalReport r;
  r.task = task;
  r.ids = std::move(ids);
  r.y_true = std::move(y_true);
  std::vector<std::string> names;
  std::map<std::string, std::vector<double>> proportions;
  for (const auto& s : scored) {
    if (s.scores.size() != r.y_true.size())
      throw DataError("classifier '" + s.name + "' scored the wrong number of samples");
    ClassifierResult c;
    c.name = s.name;
    c.scores = s.scores;
    const auto pred = metrics::threshold(s.scores);
    Diagnostics d;
    c.prf = metrics::weighted_prf(r.y_true, pred, &d);
    c.auc = metrics::roc_auc(r.y_true, s.scores, &d);
    c.accuracy = metrics::accuracy(r.y_true, pred);
    c.confusion = metrics::confusion(r.y_true, pred);
    for (auto& x : d) r.diagnostics.push_back({0, s.name + ": " + x.message});
    names.push_back(s.name);
    proportions["precision"].push_back(c.prf.precision);
    proportions["recall"].push_back(c.prf.recall);
    proportions["f1"].push_back(c.prf.f1);
    proportions["auc"].push_back(std::isnan(c.auc) ? 0.5 : c.auc);
    r.classifiers.push_back(std::move(c));
  }
  if (names.size() >= 2) {
    r.tests = metrics::pairwise_proportion_tests(names, proportions, r.y_true.size(), alpha);
    for (const auto& d : r.tests.diagnostics) r.diagnostics.push_back(d);
  } else {
    r.tests.classifiers = names;
    r.tests.alpha = alpha;
  }
  return r;
}

std::string render_table(const EvalReport& r, const EvalReport* reference) {
  std::ostringstream out;
  std::size_t positives = 0;
  for (int y : r.y_true) positives += static_cast<std::size_t>(y);
  out << "task: " << to_string(r.task) << "  test samples: " << r.y_true.size()
      << " (class 1: " << positives << ")\n";
  for (const auto& c : r.classifiers) {
    const ClassifierResult* ref = nullptr;
    if (reference)
      for (const auto& rc : reference->classifiers)
        if (rc.name == c.name) ref = &rc;
    out << "\n" << c.name << "\n";
    char line[160];
    std::snprintf(line, sizeof line, "  %-10s %8s%s\n", "metric", "value",
                  ref ? "  reference   change" : "");
    out << line;
    auto row = [&](const char* name, double v, double rv) {
      if (ref) {
        std::snprintf(line, sizeof line, "  %-10s %8s  %9s %8s\n", name, fixed(v).c_str(),
                      fixed(rv).c_str(), change(v, rv).c_str());
      } else {
        std::snprintf(line, sizeof line, "  %-10s %8s\n", name, fixed(v).c_str());
      }
      out << line;
    };
    row("precision", c.prf.precision, ref ? ref->prf.precision : 0.0);
    row("recall", c.prf.recall, ref ? ref->prf.recall : 0.0);
    row("f1", c.prf.f1, ref ? ref->prf.f1 : 0.0);
    row("auc", c.auc, ref ? ref->auc : 0.0);
    const auto& k = c.confusion.counts;
    out << "  confusion  [[" << k[0][0] << ", " << k[0][1] << "], [" << k[1][0] << ", " << k[1][1]
        << "]]\n";
  }
  if (r.tests.classifiers.size() >= 2) {
    out << "\npairwise two-proportion tests, Holm-adjusted p (alpha " << r.tests.alpha << ")\n";
    for (const char* family : kFamilies) {
      const auto it = r.tests.adjusted.find(family);
      if (it == r.tests.adjusted.end()) continue;
      out << "  " << family << "\n";
      const auto& names = r.tests.classifiers;
      for (std::size_t a = 0; a < names.size(); ++a)
        for (std::size_t b = a + 1; b < names.size(); ++b)
          out << "    " << names[a] << " vs " << names[b] << ": " << fixed(it->second[a][b], 4)
              << (it->second[a][b] < r.tests.alpha ? " *" : "") << "\n";
    }
  }
  return out.str();
}

std::string metrics_csv(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "classifier,precision,recall,f1,auc,accuracy\n";
  for (const auto& c : r.classifiers)
    out << c.name << ',' << c.prf.precision << ',' << c.prf.recall << ',' << c.prf.f1 << ','
        << c.auc << ',' << c.accuracy << '\n';
  return out.str();
}

}  // namespace cursorprof::report

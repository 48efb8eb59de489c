#include "cursorprof/session.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "cursorprof/io.hpp"
#include "cursorprof/rng.hpp"

namespace cursorprof {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(EventName name) {
  switch (name) {
    case EventName::mousemove: return "mousemove";
    case EventName::click: return "click";
    case EventName::scroll: return "scroll";
    case EventName::load: return "load";
    case EventName::other: return "other";
  }
  return "other";
}

EventName event_name_from(std::string_view name) {
  if (name == "mousemove") return EventName::mousemove;
  if (name == "click") return EventName::click;
  if (name == "scroll") return EventName::scroll;
  if (name == "load") return EventName::load;
  return EventName::other;
}

AgeGroup age_group_for(std::optional<int> age_years) {
  if (!age_years) return AgeGroup::undisclosed;
  if (*age_years >= 18 && *age_years <= 35) return AgeGroup::young;
  if (*age_years >= 36 && *age_years <= 66) return AgeGroup::adult;
  return AgeGroup::undisclosed;
}

std::size_t Session::coordinate_count() const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [](const CursorEvent& e) {
        return e.name == EventName::mousemove;
      }));
}

std::string_view to_string(Task task) {
  return task == Task::age ? "age" : "gender";
}

Task task_from(std::string_view name) {
  if (name == "age") return Task::age;
  if (name == "gender") return Task::gender;
  throw ConfigError("unknown task '" + std::string(name) + "' (age|gender)");
}

std::optional<int> label_of(const Session& s, Task task) {
  if (task == Task::gender) {
    switch (s.demographics.gender) {
      case Gender::male: return 1;
      case Gender::female: return 0;
      case Gender::undisclosed: return std::nullopt;
    }
  }
  switch (s.demographics.age_group()) {
    case AgeGroup::young: return 1;
    case AgeGroup::adult: return 0;
    case AgeGroup::undisclosed: return std::nullopt;
  }
  return std::nullopt;
}

Dataset Dataset::partition(Partition p) const {
  if (!split) throw PreconditionError("dataset has no split");
  Dataset out;
  out.seed = seed;
  for (std::size_t i = 0; i < sessions.size(); ++i)
    if ((*split)[i] == p) out.sessions.push_back(sessions[i]);
  return out;
}

InputFormat input_format_from(std::string_view tag) {
  if (tag == "canonical_jsonl") return InputFormat::canonical_jsonl;
  if (tag == "attentive_cursor_raw") return InputFormat::attentive_cursor_raw;
  throw ConfigError("unknown input format '" + std::string(tag) + "'");
}

void canonicalize_events(std::vector<CursorEvent>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const CursorEvent& a, const CursorEvent& b) { return a.t < b.t; });
  if (events.empty()) return;
  const double origin = events.front().t;
  for (auto& e : events) e.t -= origin;
  events.front().t = 0.0;
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].t <= events[i - 1].t)
      events[i].t = std::nextafter(events[i - 1].t, INFINITY);
  }
}

namespace {

struct RecordError {
  std::string message;
};

double event_number(const json& v, const char* what) {
  if (!v.is_number()) throw RecordError{std::string(what) + " is not a number"};
  const double d = v.get<double>();
  if (!std::isfinite(d) || d < 0.0)
    throw RecordError{std::string(what) + " must be finite and non-negative"};
  return d;
}

int positive_int(const json& obj, const char* key) {
  if (!obj.contains(key)) throw RecordError{std::string("missing '") + key + "'"};
  const json& v = obj[key];
  if (!v.is_number_integer() || v.get<long long>() <= 0)
    throw RecordError{std::string("'") + key + "' must be a positive integer"};
  return static_cast<int>(v.get<long long>());
}

Session parse_canonical_record(const json& obj, std::size_t line, Diagnostics& diags) {
  if (!obj.is_object()) throw RecordError{"record is not a JSON object"};
  Session s;
  if (!obj.contains("id") || !obj["id"].is_string())
    throw RecordError{"missing string 'id'"};
  s.id = obj["id"].get<std::string>();

  if (obj.contains("query") && obj["query"].is_string()) {
    s.query = obj["query"].get<std::string>();
  } else if (obj.contains("query") && !obj["query"].is_null()) {
    throw RecordError{"'query' must be a string"};
  }

  if (!obj.contains("gender")) {
    diags.push_back({line, "missing 'gender', treated as undisclosed"});
  } else if (const json& g = obj["gender"]; g.is_string()) {
    const auto v = g.get<std::string>();
    if (v == "male") {
      s.demographics.gender = Gender::male;
    } else if (v == "female") {
      s.demographics.gender = Gender::female;
    } else {
      diags.push_back({line, "unknown gender '" + v + "', treated as undisclosed"});
    }
  } else if (!g.is_null()) {
    diags.push_back({line, "'gender' is not a string, treated as undisclosed"});
  }

  if (!obj.contains("age")) {
    diags.push_back({line, "missing 'age', treated as undisclosed"});
  } else if (const json& a = obj["age"]; a.is_number_integer()) {
    const long long age = a.get<long long>();
    if (age >= 18 && age <= 100) {
      s.demographics.age_years = static_cast<int>(age);
    } else {
      diags.push_back({line, "age " + std::to_string(age) + " outside [18, 100], treated as undisclosed"});
    }
  } else if (!a.is_null()) {
    diags.push_back({line, "'age' is not an integer, treated as undisclosed"});
  }

  s.viewport_w = positive_int(obj, "vw");
  s.viewport_h = positive_int(obj, "vh");

  if (!obj.contains("events") || !obj["events"].is_array())
    throw RecordError{"missing 'events' array"};
  const json& evs = obj["events"];
  if (evs.empty()) throw RecordError{"'events' is empty"};
  s.events.reserve(evs.size());
  for (std::size_t i = 0; i < evs.size(); ++i) {
    const json& e = evs[i];
    const std::string where = "event " + std::to_string(i);
    if (!e.is_array() || e.size() < 3 || e.size() > 5)
      throw RecordError{where + " must be [x, y, t, name?, path?]"};
    CursorEvent ev;
    ev.x = event_number(e[0], (where + " x").c_str());
    ev.y = event_number(e[1], (where + " y").c_str());
    ev.t = event_number(e[2], (where + " t").c_str());
    if (e.size() >= 4) {
      if (!e[3].is_string()) throw RecordError{where + " name must be a string"};
      ev.name = event_name_from(e[3].get<std::string>());
    }
    if (e.size() == 5) {
      if (e[4].is_string()) {
        ev.target_path = e[4].get<std::string>();
      } else if (!e[4].is_null()) {
        throw RecordError{where + " path must be a string or null"};
      }
    }
    s.events.push_back(std::move(ev));
  }
  canonicalize_events(s.events);
  return s;
}

ParseResult parse_canonical(std::istream& in) {
  ParseResult out;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      out.diagnostics.push_back({line_no, std::string("invalid JSON: ") + e.what()});
      continue;
    }
    try {
      out.dataset.sessions.push_back(parse_canonical_record(obj, line_no, out.diagnostics));
    } catch (const RecordError& e) {
      out.diagnostics.push_back({line_no, e.message});
    }
  }
  if (in.bad()) throw DataError("input stream unreadable");
  return out;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::optional<double> to_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(d)) return std::nullopt;
    return d;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// evtrack-style log: header "cursor timestamp xpos ypos event xpath ...".
ParseResult parse_raw_log(std::istream& in, std::string_view raw_id) {
  ParseResult out;
  Session s;
  s.id = std::string(raw_id);
  std::string text;
  std::size_t line_no = 0;
  std::size_t clamped = 0;
  std::map<std::string, std::size_t> col{{"timestamp", 1}, {"xpos", 2}, {"ypos", 3},
                                         {"event", 4}, {"xpath", 5}};
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    auto fields = split_ws(text);
    if (fields.empty()) continue;
    if (line_no == 1 && !to_double(fields[1 < fields.size() ? 1 : 0])) {
      col.clear();
      for (std::size_t i = 0; i < fields.size(); ++i) {
        std::string name = fields[i];
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        col[name] = i;
      }
      for (const char* need : {"timestamp", "xpos", "ypos", "event"}) {
        if (!col.contains(need)) {
          out.diagnostics.push_back({line_no, std::string("header lacks '") + need + "'"});
          return out;
        }
      }
      continue;
    }
    const std::size_t need = std::max({col["timestamp"], col["xpos"], col["ypos"], col["event"]});
    if (fields.size() <= need) {
      out.diagnostics.push_back({line_no, "too few fields"});
      continue;
    }
    auto t = to_double(fields[col["timestamp"]]);
    auto x = to_double(fields[col["xpos"]]);
    auto y = to_double(fields[col["ypos"]]);
    if (!t || !x || !y) {
      out.diagnostics.push_back({line_no, "non-numeric timestamp or position"});
      continue;
    }
    CursorEvent ev;
    if (*x < 0.0 || *y < 0.0) ++clamped;
    ev.x = std::max(0.0, *x);
    ev.y = std::max(0.0, *y);
    ev.t = *t;
    ev.name = event_name_from(fields[col["event"]]);
    if (auto it = col.find("xpath"); it != col.end() && it->second < fields.size() &&
                                     fields[it->second] != "NA" && fields[it->second] != "-")
      ev.target_path = fields[it->second];
    s.events.push_back(std::move(ev));
  }
  if (in.bad()) throw DataError("input stream unreadable");
  if (clamped > 0)
    out.diagnostics.push_back({0, std::to_string(clamped) + " negative coordinates clamped to 0"});
  if (s.events.empty()) {
    out.diagnostics.push_back({0, "log contains no events"});
    return out;
  }
  canonicalize_events(s.events);
  out.dataset.sessions.push_back(std::move(s));
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

ParseResult parse_sessions(std::istream& in, InputFormat format, std::string_view raw_id) {
  if (!in) throw DataError("input stream unreadable");
  switch (format) {
    case InputFormat::canonical_jsonl: return parse_canonical(in);
    case InputFormat::attentive_cursor_raw: return parse_raw_log(in, raw_id);
  }
  throw ConfigError("unknown input format");
}

ParseResult parse_sessions_text(std::string_view text, InputFormat format, std::string_view raw_id) {
  std::istringstream in{std::string(text)};
  return parse_sessions(in, format, raw_id);
}

ParseResult import_attentive_cursor_dir(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path table = root / "participants.tsv";
  if (!fs::exists(table)) throw DataError("missing " + table.string());
  std::istringstream in(read_text_file(table));
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty " + table.string());
  const auto header = split_tabs(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[lower(header[i])] = i;
  auto find_col = [&](std::initializer_list<const char*> names) -> std::optional<std::size_t> {
    for (const char* n : names)
      if (auto it = col.find(n); it != col.end()) return it->second;
    return std::nullopt;
  };
  const auto id_col = find_col({"log_id", "id", "session_id", "user_id"});
  if (!id_col) throw DataError("participants.tsv has no id column");
  const auto gender_col = find_col({"gender", "sex"});
  const auto age_col = find_col({"age"});
  const auto query_col = find_col({"query", "search_query"});

  ParseResult out;
  std::size_t line_no = 1;
  static const std::regex window_re(R"(<window>\s*(\d+)\s*x\s*(\d+)\s*</window>)");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto row = split_tabs(line);
    if (*id_col >= row.size()) {
      out.diagnostics.push_back({line_no, "participants row lacks id"});
      continue;
    }
    const std::string id = row[*id_col];
    fs::path log = root / "logs" / (id + ".txt");
    if (!fs::exists(log)) log = root / "logs" / (id + ".csv");
    if (!fs::exists(log)) {
      out.diagnostics.push_back({line_no, "no log file for " + id});
      continue;
    }
    std::istringstream log_in(read_text_file(log));
    auto parsed = parse_raw_log(log_in, id);
    for (auto& d : parsed.diagnostics) {
      d.message = log.filename().string() + ": " + d.message;
      out.diagnostics.push_back(std::move(d));
    }
    if (parsed.dataset.sessions.empty()) continue;
    Session s = std::move(parsed.dataset.sessions.front());
    if (gender_col && *gender_col < row.size()) {
      const auto g = lower(row[*gender_col]);
      if (g == "male" || g == "m") s.demographics.gender = Gender::male;
      else if (g == "female" || g == "f") s.demographics.gender = Gender::female;
    }
    if (age_col && *age_col < row.size()) {
      if (auto a = to_double(row[*age_col]); a && *a >= 18 && *a <= 100)
        s.demographics.age_years = static_cast<int>(*a);
    }
    if (query_col && *query_col < row.size()) s.query = row[*query_col];
    const fs::path xml = root / "logs" / (id + ".xml");
    std::smatch m;
    std::string meta = fs::exists(xml) ? read_text_file(xml) : std::string();
    if (std::regex_search(meta, m, window_re)) {
      s.viewport_w = std::stoi(m[1]);
      s.viewport_h = std::stoi(m[2]);
    } else {
      s.viewport_w = 1;
      s.viewport_h = 1;
      out.diagnostics.push_back({line_no, "no viewport for " + id + ", using 1x1"});
    }
    out.dataset.sessions.push_back(std::move(s));
  }
  return out;
}

std::string serialize_session(const Session& s) {
  ordered_json j;
  j["id"] = s.id;
  j["query"] = s.query;
  switch (s.demographics.gender) {
    case Gender::male: j["gender"] = "male"; break;
    case Gender::female: j["gender"] = "female"; break;
    case Gender::undisclosed: j["gender"] = nullptr; break;
  }
  if (s.demographics.age_years) j["age"] = *s.demographics.age_years;
  else j["age"] = nullptr;
  j["vw"] = s.viewport_w;
  j["vh"] = s.viewport_h;
  ordered_json evs = ordered_json::array();
  for (const auto& e : s.events) {
    ordered_json row = ordered_json::array({e.x, e.y, e.t});
    if (e.name != EventName::mousemove || e.target_path) row.push_back(to_string(e.name));
    if (e.target_path) row.push_back(*e.target_path);
    evs.push_back(std::move(row));
  }
  j["events"] = std::move(evs);
  return j.dump();
}

std::string serialize_dataset(const Dataset& d) {
  std::string out;
  for (const auto& s : d.sessions) {
    out += serialize_session(s);
    out += '\n';
  }
  return out;
}

FilterResult filter_sessions(const Dataset& d, std::optional<Task> task, std::size_t min_coords) {
  FilterResult out;
  out.dataset.seed = d.seed;
  if (d.split) out.dataset.split.emplace();
  for (std::size_t i = 0; i < d.sessions.size(); ++i) {
    const Session& s = d.sessions[i];
    if (s.coordinate_count() < min_coords) {
      ++out.removed.too_few_coordinates;
      continue;
    }
    if (task && !label_of(s, *task)) {
      ++out.removed.undisclosed_label;
      continue;
    }
    out.dataset.sessions.push_back(s);
    if (d.split) out.dataset.split->push_back((*d.split)[i]);
  }
  return out;
}

SplitResult split_dataset(const Dataset& d, const SplitOptions& opts) {
  if (!(opts.test_fraction > 0.0 && opts.test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0, 1)");
  SplitResult out;
  out.dataset.sessions = d.sessions;
  out.dataset.seed = opts.seed;
  const std::size_t n = d.sessions.size();
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * (1.0 - opts.test_fraction) + 1e-9));
  const std::size_t n_test = n - n_train;
  std::vector<Partition> assign(n, Partition::train);
  Rng rng = make_rng(opts.seed, stream::kSplit);

  bool stratified = false;
  if (opts.stratify) {
    if (!opts.task) throw ConfigError("stratified split needs a task");
    std::array<std::vector<std::size_t>, 3> strata;
    for (std::size_t i = 0; i < n; ++i) {
      const auto lab = label_of(d.sessions[i], *opts.task);
      strata[lab ? static_cast<std::size_t>(*lab) : 2].push_back(i);
    }
    const bool feasible = std::all_of(strata.begin(), strata.end(), [](const auto& s) {
      return s.empty() || s.size() >= 2;
    });
    if (!feasible) {
      out.diagnostics.push_back({0, "a class has fewer than 2 members; split is unstratified"});
    } else {
      // Largest-remainder apportionment of n_test across strata.
      std::array<std::size_t, 3> quota{};
      std::array<double, 3> remainder{};
      std::size_t assigned = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double exact = static_cast<double>(strata[k].size()) *
                             static_cast<double>(n_test) / static_cast<double>(n);
        quota[k] = static_cast<std::size_t>(std::floor(exact));
        remainder[k] = exact - static_cast<double>(quota[k]);
        assigned += quota[k];
      }
      std::array<std::size_t, 3> order{0, 1, 2};
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
      for (std::size_t k = 0; assigned < n_test; k = (k + 1) % 3) {
        if (quota[order[k]] < strata[order[k]].size()) {
          ++quota[order[k]];
          ++assigned;
        }
      }
      for (std::size_t k = 0; k < 3; ++k) {
        std::shuffle(strata[k].begin(), strata[k].end(), rng);
        for (std::size_t j = 0; j < quota[k]; ++j) assign[strata[k][j]] = Partition::test;
      }
      stratified = true;
    }
  }
  if (!stratified) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t j = 0; j < n_test; ++j) assign[idx[j]] = Partition::test;
  }
  out.dataset.split = std::move(assign);
  return out;
}

SequenceTensor to_sequence(const Session& s, std::size_t max_len, TimeMode) {
  if (max_len == 0) throw ConfigError("max_len must be positive");
  SequenceTensor seq;
  seq.max_len = max_len;
  seq.values.assign(max_len * 3, 0.0);
  for (const auto& e : s.events) {
    if (e.name != EventName::mousemove) continue;
    if (seq.true_length == max_len) break;
    double* row = seq.values.data() + 3 * seq.true_length;
    row[0] = e.x;
    row[1] = e.y;
    row[2] = e.t;
    ++seq.true_length;
  }
  if (seq.true_length == 0)
    throw PreconditionError("session '" + s.id + "' has no mousemove events");
  return seq;
}

}  // namespace cursorprof

#include "cursorprof/model.hpp"

#include "cursorprof/io.hpp"

namespace cursorprof {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::zeror: return "zeror";
    case ModelKind::rf: return "rf";
    case ModelKind::bigru: return "bigru";
  }
  return "zeror";
}

ModelKind model_kind_from(std::string_view name) {
  if (name == "zeror") return ModelKind::zeror;
  if (name == "rf") return ModelKind::rf;
  if (name == "bigru") return ModelKind::bigru;
  throw DataError("unknown model kind '" + std::string(name) + "'");
}

nlohmann::json TrainedModel::to_json() const {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["kind"] = to_string(kind);
  j["task"] = to_string(task);
  j["metadata"] = metadata;
  j["parameters"] = parameters;
  return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kModelFormat) throw DataError("not a cursorprof model file");
  if (j.value("version", 0) != kModelVersion)
    throw DataError("unsupported model version " + std::to_string(j.value("version", 0)));
  TrainedModel m;
  m.kind = model_kind_from(j.at("kind").get<std::string>());
  m.task = task_from(j.at("task").get<std::string>());
  m.metadata = j.value("metadata", nlohmann::json::object());
  m.parameters = j.at("parameters");
  return m;
}

void save_model(const std::filesystem::path& path, const TrainedModel& m) {
  write_text_file(path, m.to_json().dump() + "\n");
}

TrainedModel load_model(const std::filesystem::path& path) {
  try {
    return TrainedModel::from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model file " + path.string() + ": " + e.what());
  }
}

}  // namespace cursorprof

#pragma once

// Serialized model container shared by every classifier kind.

#include <filesystem>
#include <string_view>

#include <json.hpp>

#include "cursorprof/session.hpp"

namespace cursorprof {

enum class ModelKind { zeror, rf, bigru };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from(std::string_view name);

inline constexpr std::string_view kModelFormat = "cursorprof-model";
inline constexpr int kModelVersion = 1;

// parameters alone must reproduce every prediction; metadata records how the
// model was trained (config, seed, data fingerprint).
struct TrainedModel {
  ModelKind kind = ModelKind::zeror;
  Task task = Task::gender;
  nlohmann::json parameters;
  nlohmann::json metadata;

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
};

void save_model(const std::filesystem::path& path, const TrainedModel& m);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace cursorprof

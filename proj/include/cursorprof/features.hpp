#pragma once

// Engineered kinematic features for the random-forest baseline.
//
// The battery is frozen in data/feature_manifest_v1.txt; feature_names()
// must match that file line for line. No feature depends on absolute cursor
// position, so translating a trajectory leaves every value unchanged.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cursorprof/error.hpp"
#include "cursorprof/session.hpp"

namespace cursorprof::features {

inline constexpr std::string_view kManifestVersion = "cursorprof-features/1";

struct FeatureOptions {
  double hover_ms = 300.0;            // minimum dwell on one target
  double pause_ms = 500.0;            // inter-event gap counted as a pause
  double direction_change_deg = 45.0; // heading change counted as a turn
};

const std::vector<std::string>& feature_names();

using FeatureVector = std::vector<double>;

// Requires at least 2 mousemove events.
FeatureVector extract_features(const Session& s, const FeatureOptions& opts = {});

// Dense row-major matrix with named columns.
struct FeatureMatrix {
  std::vector<std::string> names;
  std::size_t rows = 0;
  std::vector<double> data;

  std::size_t cols() const { return names.size(); }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols(), cols()};
  }
  std::vector<double> column(std::size_t c) const;
};

// Extracts every session in parallel.
FeatureMatrix extract_matrix(std::span<const Session> sessions, const FeatureOptions& opts = {});

struct FeatureFilterConfig {
  double corr_threshold = 0.80;
  double corr_p = 0.05;
  bool drop_linear_dependent = true;
};

struct FeatureMask {
  std::vector<std::size_t> kept;  // indices into the unfiltered battery
  std::vector<std::string> names; // names of kept columns
  Diagnostics diagnostics;        // one entry per dropped column

  nlohmann::json to_json() const;
  static FeatureMask from_json(const nlohmann::json& j);
};

// Pearson correlation with its two-sided t-test p-value.
struct Correlation {
  double r = 0.0;
  double p = 1.0;
};
Correlation pearson(std::span<const double> a, std::span<const double> b);

// Fit on the training matrix only. Drops zero-variance columns, then for
// each column in canonical order drops it if it correlates (|r| >= threshold,
// p < corr_p) with an earlier kept column, then drops columns that are
// affinely dependent on the earlier survivors.
FeatureMask fit_filter(const FeatureMatrix& train, const FeatureFilterConfig& cfg = {});

FeatureMatrix apply_mask(const FeatureMatrix& m, const FeatureMask& mask);

struct Bounds {
  std::vector<double> min;
  std::vector<double> max;

  nlohmann::json to_json() const;
  static Bounds from_json(const nlohmann::json& j);
};

Bounds fit_bounds(const FeatureMatrix& train);

// Maps each column to [0, 1] with the given bounds, clipping values outside
// them. Zero-range columns map to 0.5.
FeatureMatrix apply_bounds(const FeatureMatrix& m, const Bounds& b);

struct Normalized {
  FeatureMatrix matrix;
  Bounds bounds;
};

// Fits bounds on `m` when none are given.
Normalized normalize(const FeatureMatrix& m, const std::optional<Bounds>& bounds = std::nullopt);

// Header is the column names; an "id" column leads when ids are given.
std::string to_csv(const FeatureMatrix& m, std::span<const std::string> ids = {});

}  // namespace cursorprof::features

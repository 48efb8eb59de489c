#include "cursorprof/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "cursorprof/parallel.hpp"

namespace cursorprof::features {
namespace {

constexpr std::array<std::string_view, 16> kSeries = {
    "step_distance", "step_dx",          "step_dy",            "step_dt",
    "speed",         "speed_x",          "speed_y",            "acceleration",
    "abs_acceleration", "jerk",          "direction_angle",    "angular_change",
    "abs_angular_change", "angular_velocity", "curvature",     "pause_indicator"};

constexpr std::array<std::string_view, 7> kAggregates = {"min", "max", "mean", "sd",
                                                         "median", "q25", "q75"};

constexpr std::array<std::string_view, 6> kSummed = {"step_distance", "step_dx", "step_dy",
                                                     "step_dt", "abs_angular_change",
                                                     "pause_indicator"};

constexpr std::array<std::string_view, 35> kScalars = {
    "event_count",          "mousemove_count",        "click_count",
    "scroll_count",         "load_count",             "other_count",
    "hover_count",          "hover_total_ms",         "hover_max_ms",
    "unique_targets",       "direction_changes",      "x_reversals",
    "y_reversals",          "pause_count",            "pause_total_ms",
    "pause_max_ms",         "total_distance",         "total_duration",
    "endpoint_distance",    "straightness",           "max_deviation",
    "bbox_width_fraction",  "bbox_height_fraction",   "bbox_area_fraction",
    "events_per_second",    "moves_per_second",       "zero_distance_steps",
    "time_to_first_move",   "time_to_first_click",    "acceleration_positive_fraction",
    "acceleration_sign_changes", "speed_peak_count",  "mean_speed_first_half",
    "mean_speed_second_half", "time_to_peak_speed_fraction"};

double quantile(std::vector<double> sorted, double q) {
  // sorted must be non-empty and ascending; linear interpolation.
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

void aggregate(const std::vector<double>& v, std::vector<double>& out) {
  if (v.empty()) {
    out.insert(out.end(), kAggregates.size(), 0.0);
    return;
  }
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  out.push_back(sorted.front());
  out.push_back(sorted.back());
  out.push_back(mean);
  out.push_back(sd);
  out.push_back(quantile(sorted, 0.5));
  out.push_back(quantile(sorted, 0.25));
  out.push_back(quantile(sorted, 0.75));
}

double sum_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double wrap_degrees(double d) {
  while (d > 180.0) d -= 360.0;
  while (d <= -180.0) d += 360.0;
  return d;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (auto s : kSeries)
      for (auto a : kAggregates) n.push_back(std::string(s) + "_" + std::string(a));
    for (auto s : kSummed) n.push_back(std::string(s) + "_sum");
    for (auto s : kScalars) n.emplace_back(s);
    return n;
  }();
  return names;
}

std::vector<double> FeatureMatrix::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
  return out;
}

FeatureVector extract_features(const Session& s, const FeatureOptions& opts) {
  std::vector<const CursorEvent*> moves;
  for (const auto& e : s.events)
    if (e.name == EventName::mousemove) moves.push_back(&e);
  if (moves.size() < 2)
    throw PreconditionError("session '" + s.id + "' has fewer than 2 mousemove events");

  const std::size_t n = moves.size();
  std::vector<double> dist, adx, ady, dts, speed, vx, vy;
  for (std::size_t i = 1; i < n; ++i) {
    const double dx = moves[i]->x - moves[i - 1]->x;
    const double dy = moves[i]->y - moves[i - 1]->y;
    const double dt = moves[i]->t - moves[i - 1]->t;
    const double d = std::hypot(dx, dy);
    dist.push_back(d);
    adx.push_back(std::abs(dx));
    ady.push_back(std::abs(dy));
    dts.push_back(dt);
    speed.push_back(d / dt);
    vx.push_back(std::abs(dx) / dt);
    vy.push_back(std::abs(dy) / dt);
  }

  std::vector<double> accel, abs_accel, jerk;
  for (std::size_t i = 1; i < speed.size(); ++i) {
    accel.push_back((speed[i] - speed[i - 1]) / dts[i]);
    abs_accel.push_back(std::abs(accel.back()));
  }
  for (std::size_t i = 1; i < accel.size(); ++i) jerk.push_back((accel[i] - accel[i - 1]) / dts[i + 1]);

  // Headings exist only for steps that move; turns compare successive ones.
  std::vector<double> heading, turn, abs_turn, ang_vel, curvature;
  double prev_heading = 0.0;
  bool have_heading = false;
  std::size_t zero_steps = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double dx = moves[i + 1]->x - moves[i]->x;
    const double dy = moves[i + 1]->y - moves[i]->y;
    if (dist[i] == 0.0) {
      ++zero_steps;
      continue;
    }
    const double h = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
    heading.push_back(h);
    if (have_heading) {
      const double dth = wrap_degrees(h - prev_heading);
      turn.push_back(dth);
      abs_turn.push_back(std::abs(dth));
      ang_vel.push_back(std::abs(dth) / dts[i]);
      curvature.push_back(std::abs(dth) / dist[i]);
    }
    prev_heading = h;
    have_heading = true;
  }

  std::vector<double> pause_ind;
  for (double dt : dts) pause_ind.push_back(dt > opts.pause_ms ? 1.0 : 0.0);

  FeatureVector out;
  out.reserve(feature_names().size());
  for (const auto* series : {&dist, &adx, &ady, &dts, &speed, &vx, &vy, &accel, &abs_accel, &jerk,
                             &heading, &turn, &abs_turn, &ang_vel, &curvature, &pause_ind})
    aggregate(*series, out);
  for (const auto* series : {&dist, &adx, &ady, &dts, &abs_turn, &pause_ind})
    out.push_back(sum_of(*series));

  // Scalars, in kScalars order.
  std::size_t clicks = 0, scrolls = 0, loads = 0, others = 0;
  std::optional<double> first_click;
  for (const auto& e : s.events) {
    switch (e.name) {
      case EventName::click:
        ++clicks;
        if (!first_click) first_click = e.t;
        break;
      case EventName::scroll: ++scrolls; break;
      case EventName::load: ++loads; break;
      case EventName::other: ++others; break;
      case EventName::mousemove: break;
    }
  }

  // Hover: a run of consecutive mousemoves on one target whose dwell (until
  // the first move onto another target) reaches hover_ms.
  std::size_t hovers = 0;
  double hover_total = 0.0, hover_max = 0.0;
  std::set<std::string> targets;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    const auto& path = moves[i]->target_path;
    if (path) targets.insert(*path);
    while (j < n && path && moves[j]->target_path == path) ++j;
    if (path) {
      const double end = j < n ? moves[j]->t : moves[j - 1]->t;
      const double dwell = end - moves[i]->t;
      if (dwell >= opts.hover_ms) {
        ++hovers;
        hover_total += dwell;
        hover_max = std::max(hover_max, dwell);
      }
    }
    i = j;
  }

  std::size_t turns = 0;
  for (double a : abs_turn)
    if (a > opts.direction_change_deg) ++turns;

  auto reversals = [&](bool x_axis) {
    std::size_t count = 0;
    int prev = 0;
    for (std::size_t i = 1; i < n; ++i) {
      const double d = x_axis ? moves[i]->x - moves[i - 1]->x : moves[i]->y - moves[i - 1]->y;
      const int sign = d > 0 ? 1 : (d < 0 ? -1 : 0);
      if (sign == 0) continue;
      if (prev != 0 && sign != prev) ++count;
      prev = sign;
    }
    return static_cast<double>(count);
  };

  std::size_t pauses = 0;
  double pause_total = 0.0, pause_max = 0.0;
  for (double dt : dts) {
    if (dt > opts.pause_ms) {
      ++pauses;
      pause_total += dt;
      pause_max = std::max(pause_max, dt);
    }
  }

  const double total_distance = sum_of(dist);
  const double duration = moves.back()->t - moves.front()->t;
  const double ex = moves.back()->x - moves.front()->x;
  const double ey = moves.back()->y - moves.front()->y;
  const double endpoint = std::hypot(ex, ey);
  const double straightness = total_distance > 0.0 ? endpoint / total_distance : 1.0;

  double max_dev = 0.0;
  for (const auto* m : moves) {
    const double px = m->x - moves.front()->x;
    const double py = m->y - moves.front()->y;
    const double dev = endpoint > 0.0 ? std::abs(px * ey - py * ex) / endpoint : std::hypot(px, py);
    max_dev = std::max(max_dev, dev);
  }

  double min_x = moves.front()->x, max_x = min_x, min_y = moves.front()->y, max_y = min_y;
  for (const auto* m : moves) {
    min_x = std::min(min_x, m->x);
    max_x = std::max(max_x, m->x);
    min_y = std::min(min_y, m->y);
    max_y = std::max(max_y, m->y);
  }
  const double vw = std::max(1, s.viewport_w);
  const double vh = std::max(1, s.viewport_h);
  const double session_span = s.events.back().t - s.events.front().t;

  std::size_t accel_pos = 0, accel_flips = 0;
  for (std::size_t i = 0; i < accel.size(); ++i) {
    if (accel[i] > 0) ++accel_pos;
    if (i > 0 && ((accel[i] > 0) != (accel[i - 1] > 0))) ++accel_flips;
  }
  std::size_t peaks = 0;
  for (std::size_t i = 0; i < speed.size(); ++i) {
    const bool left = i == 0 || speed[i] > speed[i - 1];
    const bool right = i + 1 == speed.size() || speed[i] >= speed[i + 1];
    if (left && right && speed[i] > 0) ++peaks;
  }
  const std::size_t half = speed.size() / 2;
  const std::span<const double> sp(speed);
  const double first_half = half > 0 ? mean_of(sp.first(half)) : mean_of(sp);
  const double second_half = mean_of(sp.subspan(half));
  const auto peak_it = std::max_element(speed.begin(), speed.end());
  const double peak_time = moves[static_cast<std::size_t>(peak_it - speed.begin()) + 1]->t - moves.front()->t;

  const double secs = session_span > 0.0 ? session_span / 1000.0 : 0.0;
  const double move_secs = duration / 1000.0;
  out.push_back(static_cast<double>(s.events.size()));
  out.push_back(static_cast<double>(n));
  out.push_back(static_cast<double>(clicks));
  out.push_back(static_cast<double>(scrolls));
  out.push_back(static_cast<double>(loads));
  out.push_back(static_cast<double>(others));
  out.push_back(static_cast<double>(hovers));
  out.push_back(hover_total);
  out.push_back(hover_max);
  out.push_back(static_cast<double>(targets.size()));
  out.push_back(static_cast<double>(turns));
  out.push_back(reversals(true));
  out.push_back(reversals(false));
  out.push_back(static_cast<double>(pauses));
  out.push_back(pause_total);
  out.push_back(pause_max);
  out.push_back(total_distance);
  out.push_back(duration);
  out.push_back(endpoint);
  out.push_back(straightness);
  out.push_back(max_dev);
  out.push_back((max_x - min_x) / vw);
  out.push_back((max_y - min_y) / vh);
  out.push_back((max_x - min_x) * (max_y - min_y) / (vw * vh));
  out.push_back(secs > 0.0 ? static_cast<double>(s.events.size()) / secs : 0.0);
  out.push_back(move_secs > 0.0 ? static_cast<double>(n) / move_secs : 0.0);
  out.push_back(static_cast<double>(zero_steps));
  out.push_back(moves.front()->t - s.events.front().t);
  out.push_back((first_click ? *first_click : s.events.back().t) - s.events.front().t);
  out.push_back(accel.empty() ? 0.0 : static_cast<double>(accel_pos) / static_cast<double>(accel.size()));
  out.push_back(static_cast<double>(accel_flips));
  out.push_back(static_cast<double>(peaks));
  out.push_back(first_half);
  out.push_back(second_half);
  out.push_back(duration > 0.0 ? peak_time / duration : 0.0);

  if (out.size() != feature_names().size()) throw NumericError("feature battery size mismatch");
  for (double v : out)
    if (!std::isfinite(v)) throw NumericError("non-finite feature in session '" + s.id + "'");
  return out;
}

FeatureMatrix extract_matrix(std::span<const Session> sessions, const FeatureOptions& opts) {
  FeatureMatrix m;
  m.names = feature_names();
  m.rows = sessions.size();
  m.data.assign(m.rows * m.cols(), 0.0);
  parallel_for(m.rows, [&](std::size_t r) {
    const FeatureVector v = extract_features(sessions[r], opts);
    std::copy(v.begin(), v.end(), m.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols()));
  });
  return m;
}

Correlation pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n != b.size()) throw NumericError("pearson: length mismatch");
  if (n < 2) return {0.0, 1.0};
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, 1.0};
  const double r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  if (n < 3) return {r, 1.0};
  if (std::abs(r) >= 1.0) return {r, 0.0};
  const double df = static_cast<double>(n - 2);
  const double t = r * std::sqrt(df / (1.0 - r * r));
  const boost::math::students_t dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return {r, std::min(1.0, p)};
}

FeatureMask fit_filter(const FeatureMatrix& train, const FeatureFilterConfig& cfg) {
  if (train.rows < 2) throw PreconditionError("fit_filter needs at least 2 training rows");
  if (!(cfg.corr_threshold > 0.0 && cfg.corr_threshold <= 1.0))
    throw ConfigError("corr_threshold must lie in (0, 1]");
  FeatureMask mask;
  std::vector<std::vector<double>> cols(train.cols());
  for (std::size_t c = 0; c < train.cols(); ++c) cols[c] = train.column(c);

  std::vector<std::size_t> candidates;
  for (std::size_t c = 0; c < train.cols(); ++c) {
    const auto [lo, hi] = std::minmax_element(cols[c].begin(), cols[c].end());
    if (*lo == *hi) {
      mask.diagnostics.push_back({0, train.names[c] + ": zero variance, dropped"});
      continue;
    }
    candidates.push_back(c);
  }

  std::vector<std::size_t> uncorrelated;
  for (std::size_t c : candidates) {
    bool drop = false;
    for (std::size_t k : uncorrelated) {
      const Correlation corr = pearson(cols[k], cols[c]);
      if (std::abs(corr.r) >= cfg.corr_threshold && corr.p < cfg.corr_p) {
        std::ostringstream msg;
        msg << train.names[c] << ": |r| = " << std::abs(corr.r) << " with " << train.names[k]
            << ", dropped";
        mask.diagnostics.push_back({0, msg.str()});
        drop = true;
        break;
      }
    }
    if (!drop) uncorrelated.push_back(c);
  }

  if (!cfg.drop_linear_dependent) {
    mask.kept = uncorrelated;
  } else {
    // Modified Gram-Schmidt on centred columns; a column whose residual is
    // negligible relative to its own norm lies in the span of the earlier
    // survivors (plus the intercept).
    std::vector<std::vector<double>> basis;
    for (std::size_t c : uncorrelated) {
      std::vector<double> v = cols[c];
      const double m = mean_of(v);
      double norm0 = 0.0;
      for (double& x : v) {
        x -= m;
        norm0 += x * x;
      }
      for (const auto& q : basis) {
        double proj = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) proj += q[i] * v[i];
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * q[i];
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      if (norm <= 1e-10 * norm0) {
        mask.diagnostics.push_back({0, train.names[c] + ": linearly dependent, dropped"});
        continue;
      }
      const double inv = 1.0 / std::sqrt(norm);
      for (double& x : v) x *= inv;
      basis.push_back(std::move(v));
      mask.kept.push_back(c);
    }
  }
  for (std::size_t c : mask.kept) mask.names.push_back(train.names[c]);
  return mask;
}

nlohmann::json FeatureMask::to_json() const {
  nlohmann::json j;
  j["manifest"] = kManifestVersion;
  j["kept"] = kept;
  j["names"] = names;
  nlohmann::json d = nlohmann::json::array();
  for (const auto& x : diagnostics) d.push_back(x.message);
  j["dropped"] = d;
  return j;
}

FeatureMask FeatureMask::from_json(const nlohmann::json& j) {
  if (j.value("manifest", "") != kManifestVersion)
    throw DataError("feature mask was built for a different manifest");
  FeatureMask m;
  m.kept = j.at("kept").get<std::vector<std::size_t>>();
  m.names = j.at("names").get<std::vector<std::string>>();
  for (const auto& d : j.value("dropped", nlohmann::json::array()))
    m.diagnostics.push_back({0, d.get<std::string>()});
  return m;
}

FeatureMatrix apply_mask(const FeatureMatrix& m, const FeatureMask& mask) {
  FeatureMatrix out;
  out.rows = m.rows;
  for (std::size_t c : mask.kept) {
    if (c >= m.cols()) throw DataError("feature mask does not fit the matrix");
    out.names.push_back(m.names[c]);
  }
  out.data.reserve(out.rows * out.cols());
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c : mask.kept) out.data.push_back(m.at(r, c));
  return out;
}

Bounds fit_bounds(const FeatureMatrix& train) {
  if (train.rows == 0) throw PreconditionError("fit_bounds needs at least one row");
  Bounds b;
  b.min.assign(train.cols(), 0.0);
  b.max.assign(train.cols(), 0.0);
  for (std::size_t c = 0; c < train.cols(); ++c) {
    const auto col = train.column(c);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    b.min[c] = *lo;
    b.max[c] = *hi;
  }
  return b;
}

FeatureMatrix apply_bounds(const FeatureMatrix& m, const Bounds& b) {
  if (b.min.size() != m.cols() || b.max.size() != m.cols())
    throw DataError("bounds do not fit the matrix");
  FeatureMatrix out = m;
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double range = b.max[c] - b.min[c];
      double& v = out.data[r * m.cols() + c];
      v = range > 0.0 ? std::clamp((v - b.min[c]) / range, 0.0, 1.0) : 0.5;
    }
  }
  return out;
}

Normalized normalize(const FeatureMatrix& m, const std::optional<Bounds>& bounds) {
  Bounds b = bounds ? *bounds : fit_bounds(m);
  FeatureMatrix scaled = apply_bounds(m, b);
  return {std::move(scaled), std::move(b)};
}

nlohmann::json Bounds::to_json() const {
  return {{"manifest", kManifestVersion}, {"min", min}, {"max", max}};
}

Bounds Bounds::from_json(const nlohmann::json& j) {
  Bounds b;
  b.min = j.at("min").get<std::vector<double>>();
  b.max = j.at("max").get<std::vector<double>>();
  if (b.min.size() != b.max.size()) throw DataError("bounds min/max length mismatch");
  return b;
}

std::string to_csv(const FeatureMatrix& m, std::span<const std::string> ids) {
  std::ostringstream out;
  out << std::setprecision(17);
  if (!ids.empty()) out << "id,";
  for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m.names[c];
  out << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (!ids.empty()) out << ids[r] << ',';
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m.at(r, c);
    out << '\n';
  }
  return out.str();
}

}  // namespace cursorprof::features

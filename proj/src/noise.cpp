#include "cursorprof/noise.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "cursorprof/parallel.hpp"

namespace cursorprof::noise {
namespace {

constexpr double kDefaultGapMs = 150.0;

double parse_number(std::string_view s, std::string_view spec) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ConfigError("bad sigma spec '" + std::string(spec) + "'");
  return v;
}

struct Displacement {
  double dx = 0.0;
  double dy = 0.0;
};

Displacement draw_displacement(double sigma, Distribution dist, Rng& rng) {
  if (dist == Distribution::uniform_radius) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double rho = sigma * u(rng);
    const double theta = 2.0 * std::numbers::pi * u(rng);
    return {rho * std::cos(theta), rho * std::sin(theta)};
  }
  std::normal_distribution<double> n(0.0, sigma);
  for (;;) {
    const double dx = n(rng);
    const double dy = n(rng);
    if (std::hypot(dx, dy) <= sigma) return {dx, dy};
  }
}

double draw_jitter(double sigma, Distribution dist, Rng& rng) {
  if (dist == Distribution::uniform_radius)
    return std::uniform_real_distribution<double>(-sigma, sigma)(rng);
  std::normal_distribution<double> n(0.0, sigma);
  for (;;) {
    const double j = n(rng);
    if (std::abs(j) <= sigma) return j;
  }
}

// Reflects a non-positive coordinate to the other side of its anchor; the
// displacement magnitude is unchanged.
bool place(double anchor, double d, double& out) {
  out = anchor + d;
  if (out > 0.0) return true;
  out = anchor - d;
  return out > 0.0;
}

}  // namespace

void NoiseConfig::validate() const {
  if (events_per_gap < 1) throw ConfigError("events_per_gap must be at least 1");
  if (mode == SigmaMode::fixed && !(sigma >= 0.0 && std::isfinite(sigma)))
    throw ConfigError("sigma must be a finite value >= 0");
  if (mode == SigmaMode::uniform &&
      !(low >= 0.0 && high >= low && std::isfinite(high)))
    throw ConfigError("uniform sigma needs 0 <= low <= high");
}

nlohmann::json NoiseConfig::to_json() const {
  nlohmann::json j;
  j["sigma"] = sigma_spec(*this);
  j["events_per_gap"] = events_per_gap;
  j["distribution"] = std::string(to_string(distribution));
  j["seed"] = seed;
  return j;
}

NoiseConfig NoiseConfig::from_json(const nlohmann::json& j) {
  NoiseConfig c;
  if (j.contains("sigma")) c = parse_sigma_spec(j.at("sigma").get<std::string>(), c);
  c.events_per_gap = j.value("events_per_gap", c.events_per_gap);
  if (j.contains("distribution"))
    c.distribution = distribution_from(j.at("distribution").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

NoiseConfig parse_sigma_spec(std::string_view spec, NoiseConfig base) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto colon = spec.find(':', start);
    parts.push_back(spec.substr(start, colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (parts[0] == "fixed" && parts.size() == 2) {
    base.mode = SigmaMode::fixed;
    base.sigma = parse_number(parts[1], spec);
  } else if (parts[0] == "uniform" && (parts.size() == 1 || parts.size() == 3)) {
    base.mode = SigmaMode::uniform;
    base.low = parts.size() == 3 ? parse_number(parts[1], spec) : 0.0;
    base.high = parts.size() == 3 ? parse_number(parts[2], spec) : 1.0;
  } else {
    throw ConfigError("bad sigma spec '" + std::string(spec) +
                      "', expected fixed:S, uniform or uniform:LOW:HIGH");
  }
  base.validate();
  return base;
}

std::string sigma_spec(const NoiseConfig& cfg) {
  auto num = [](double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  if (cfg.mode == SigmaMode::fixed) return "fixed:" + num(cfg.sigma);
  return "uniform:" + num(cfg.low) + ":" + num(cfg.high);
}

std::string_view to_string(Distribution d) {
  return d == Distribution::gaussian_radius ? "gaussian_radius" : "uniform_radius";
}

Distribution distribution_from(std::string_view name) {
  if (name == "gaussian_radius") return Distribution::gaussian_radius;
  if (name == "uniform_radius") return Distribution::uniform_radius;
  throw ConfigError("unknown noise distribution '" + std::string(name) + "'");
}

Distorted distort(std::span<const CursorEvent> events, double sigma, const NoiseConfig& cfg,
                  Rng& rng) {
  if (!(sigma >= 0.0 && std::isfinite(sigma))) throw ConfigError("sigma must be >= 0");
  if (cfg.events_per_gap < 1) throw ConfigError("events_per_gap must be at least 1");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (!std::isfinite(e.x) || !std::isfinite(e.y) || !std::isfinite(e.t))
      throw PreconditionError("distort: non-finite event values");
    if (i > 0 && !(events[i - 1].t < e.t))
      throw PreconditionError("distort: event times must be strictly increasing");
  }

  Distorted out;
  out.sigma = sigma;
  const std::size_t E = cfg.events_per_gap;
  out.events.reserve(events.size() * (1 + E));
  out.anchor.reserve(events.size() * (1 + E));

  for (std::size_t i = 0; i < events.size(); ++i) {
    const CursorEvent& e = events[i];
    out.events.push_back(e);
    out.anchor.push_back(-1);
    if (e.name != EventName::mousemove || sigma == 0.0) continue;

    double next_t = 0.0;
    if (i + 1 < events.size()) {
      next_t = events[i + 1].t;
    } else {
      const double gap = i > 0 ? e.t - events[i - 1].t : kDefaultGapMs;
      next_t = e.t + gap;
    }
    const double gap = next_t - e.t;
    const double slot = gap / static_cast<double>(E + 1);
    double prev_t = e.t;
    for (std::size_t k = 1; k <= E; ++k) {
      const Displacement d = draw_displacement(sigma, cfg.distribution, rng);
      double jitter = draw_jitter(sigma, cfg.distribution, rng);
      CursorEvent s;
      s.name = EventName::mousemove;
      // A zero displacement on an axis whose anchor is 0 has no positive
      // reflection; redraw it.
      bool ok = place(e.x, d.dx, s.x) && place(e.y, d.dy, s.y);
      for (int tries = 0; !ok && tries < 64; ++tries) {
        const Displacement r = draw_displacement(sigma, cfg.distribution, rng);
        ok = place(e.x, r.dx, s.x) && place(e.y, r.dy, s.y);
      }
      const double half = 0.45 * slot;
      jitter = std::clamp(jitter, -half, half);
      s.t = e.t + slot * static_cast<double>(k) + jitter;
      if (!(s.t > prev_t && s.t < next_t)) s.t = e.t + slot * static_cast<double>(k);
      if (!ok || !(s.t > prev_t && s.t < next_t && s.t > 0.0)) {
        ++out.skipped;
        continue;
      }
      prev_t = s.t;
      out.events.push_back(std::move(s));
      out.anchor.push_back(static_cast<std::ptrdiff_t>(i));
    }
  }
  return out;
}

Distorted distort(std::span<const CursorEvent> events, const NoiseConfig& cfg, Rng& rng) {
  double sigma = cfg.sigma;
  if (cfg.mode == SigmaMode::uniform)
    sigma = std::uniform_real_distribution<double>(cfg.low, cfg.high)(rng);
  return distort(events, sigma, cfg, rng);
}

namespace {

Dataset distort_where(const Dataset& d, const NoiseConfig& cfg,
                      const std::vector<bool>& selected, std::vector<SessionNoise>* provenance) {
  cfg.validate();
  Dataset out = d;
  std::vector<SessionNoise> prov(d.sessions.size());
  parallel_for(d.sessions.size(), [&](std::size_t i) {
    prov[i].id = d.sessions[i].id;
    if (!selected[i]) return;
    Rng rng = make_rng(cfg.seed, stream::kNoise, i);
    Distorted r = distort(d.sessions[i].events, cfg, rng);
    out.sessions[i].events = std::move(r.events);
    prov[i].sigma = r.sigma;
    prov[i].anchor = std::move(r.anchor);
    prov[i].skipped = r.skipped;
  });
  if (provenance) *provenance = std::move(prov);
  return out;
}

}  // namespace

Dataset distort_dataset(const Dataset& d, const NoiseConfig& cfg,
                        std::vector<SessionNoise>* provenance) {
  return distort_where(d, cfg, std::vector<bool>(d.sessions.size(), true), provenance);
}

Dataset distort_partition(const Dataset& d, Partition p, const NoiseConfig& cfg) {
  if (!d.split) throw PreconditionError("distort_partition needs a split dataset");
  std::vector<bool> selected(d.sessions.size());
  for (std::size_t i = 0; i < selected.size(); ++i) selected[i] = (*d.split)[i] == p;
  return distort_where(d, cfg, selected, nullptr);
}

}  // namespace cursorprof::noise

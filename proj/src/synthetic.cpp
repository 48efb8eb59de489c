#include "cursorprof/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "cursorprof/rng.hpp"

namespace cursorprof::synth {
namespace {

constexpr double kPollMs = 150.0;
constexpr int kGrid = 4;

constexpr std::array<const char*, 8> kQueries = {
    "weather tomorrow", "cheap flights", "pizza near me", "python tutorial",
    "football scores",  "flu symptoms",  "used cars",     "movie times"};

double min_jerk(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  return tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Segment {
  Point from;
  Point to;
  double duration = 1.0;
};

std::string cell_path(const Point& p, int vw, int vh) {
  const int col = std::clamp(static_cast<int>(p.x * kGrid / vw), 0, kGrid - 1);
  const int row = std::clamp(static_cast<int>(p.y * kGrid / vh), 0, kGrid - 1);
  return "/html/body/div[1]/div[" + std::to_string(row * kGrid + col + 1) + "]";
}

class ReachPlanner {
 public:
  ReachPlanner(const SynthConfig& cfg, double speed, double submovement_rate, Rng& rng)
      : cfg_(cfg), speed_(speed), submovements_(submovement_rate), rng_(rng) {}

  // Queues the sub-movements of one reach from `start` to a random target.
  void plan(const Point& start) {
    std::uniform_real_distribution<double> ux(20.0, cfg_.viewport_w - 20.0);
    std::uniform_real_distribution<double> uy(20.0, cfg_.viewport_h - 20.0);
    const Point target{ux(rng_), uy(rng_)};
    const int corrections = std::poisson_distribution<int>(submovements_)(rng_);
    std::normal_distribution<double> aim(0.0, 0.08);
    std::uniform_real_distribution<double> cover(0.75, 0.92);
    Point from = start;
    for (int k = 0; k <= corrections; ++k) {
      Point to = target;
      if (k < corrections) {
        const double f = cover(rng_);
        const double angle = aim(rng_);
        const double dx = (target.x - from.x) * f;
        const double dy = (target.y - from.y) * f;
        to = {from.x + dx * std::cos(angle) - dy * std::sin(angle),
              from.y + dx * std::sin(angle) + dy * std::cos(angle)};
      }
      const double dist = std::hypot(to.x - from.x, to.y - from.y);
      queue_.push_back({from, to, std::max(kPollMs, dist / speed_)});
      from = to;
    }
    std::reverse(queue_.begin(), queue_.end());
  }

  Segment next(const Point& at) {
    if (queue_.empty()) plan(at);
    Segment s = queue_.back();
    queue_.pop_back();
    return s;
  }

 private:
  const SynthConfig& cfg_;
  double speed_;
  double submovements_;
  Rng& rng_;
  std::vector<Segment> queue_;
};

Session make_session(const SynthConfig& cfg, std::size_t index) {
  Rng rng = make_rng(cfg.seed, stream::kSynth, index);
  const int label = static_cast<int>(index % 2);
  const MotorProfile profile = motor_profile(label, cfg.signal_strength);

  Session s;
  s.id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(index);
  s.query = kQueries[std::uniform_int_distribution<std::size_t>(0, kQueries.size() - 1)(rng)];
  s.viewport_w = cfg.viewport_w;
  s.viewport_h = cfg.viewport_h;

  std::bernoulli_distribution coin(0.5);
  if (cfg.label == Task::gender) {
    s.demographics.gender = label == 1 ? Gender::male : Gender::female;
    s.demographics.age_years = std::uniform_int_distribution<int>(18, 66)(rng);
  } else {
    s.demographics.age_years = label == 1 ? std::uniform_int_distribution<int>(18, 35)(rng)
                                          : std::uniform_int_distribution<int>(36, 66)(rng);
    s.demographics.gender = coin(rng) ? Gender::male : Gender::female;
  }

  const double len_draw = std::normal_distribution<double>(cfg.length.mean, cfg.length.sd)(rng);
  const auto length = static_cast<std::size_t>(std::clamp(
      std::round(len_draw), static_cast<double>(cfg.length.min), static_cast<double>(cfg.length.max)));

  // Per-session variation around the class profile.
  const double speed = profile.speed * std::exp(std::normal_distribution<double>(0.0, 0.25)(rng));
  const double jitter = profile.jitter_px * std::exp(std::normal_distribution<double>(0.0, 0.2)(rng));

  std::uniform_real_distribution<double> poll_jitter(-15.0, 15.0);
  std::uniform_real_distribution<double> pause_len(500.0, 1500.0);
  std::bernoulli_distribution pause(profile.pause_prob);
  std::bernoulli_distribution scroll(0.03);
  std::normal_distribution<double> noise(0.0, jitter);

  auto clamp_point = [&](Point p) {
    p.x = std::clamp(p.x, 1.0, cfg.viewport_w - 1.0);
    p.y = std::clamp(p.y, 1.0, cfg.viewport_h - 1.0);
    return p;
  };

  s.events.push_back({0.0, 0.0, 0.0, EventName::load, std::nullopt});
  std::uniform_real_distribution<double> ux(20.0, cfg.viewport_w - 20.0);
  std::uniform_real_distribution<double> uy(20.0, cfg.viewport_h - 20.0);
  Point pos{ux(rng), uy(rng)};
  ReachPlanner planner(cfg, speed, profile.submovement_rate, rng);
  Segment seg = planner.next(pos);
  double seg_elapsed = 0.0;
  double t = std::uniform_real_distribution<double>(200.0, 1000.0)(rng);

  for (std::size_t k = 0; k < length; ++k) {
    double dt = kPollMs + poll_jitter(rng);
    if (k > 0 && pause(rng)) dt += pause_len(rng);
    if (k > 0) {
      // Idle time inside a pause does not advance the reach.
      double budget = std::min(dt, kPollMs + 15.0);
      while (budget > 0.0) {
        const double left = seg.duration - seg_elapsed;
        if (budget < left) {
          seg_elapsed += budget;
          budget = 0.0;
        } else {
          budget -= left;
          const Point end = seg.to;
          seg = planner.next(end);
          seg_elapsed = 0.0;
        }
      }
      if (scroll(rng)) {
        s.events.push_back({pos.x, pos.y, t + dt / 2.0, EventName::scroll, std::nullopt});
      }
      t += dt;
    }
    const double f = min_jerk(seg_elapsed / seg.duration);
    Point ideal{seg.from.x + (seg.to.x - seg.from.x) * f, seg.from.y + (seg.to.y - seg.from.y) * f};
    pos = clamp_point({ideal.x + noise(rng), ideal.y + noise(rng)});
    s.events.push_back({pos.x, pos.y, t, EventName::mousemove,
                        cell_path(pos, cfg.viewport_w, cfg.viewport_h)});
  }
  const double click_t = t + std::uniform_real_distribution<double>(100.0, 400.0)(rng);
  s.events.push_back({pos.x, pos.y, click_t, EventName::click,
                      cell_path(pos, cfg.viewport_w, cfg.viewport_h) + "/a"});
  canonicalize_events(s.events);
  return s;
}

}  // namespace

MotorProfile motor_profile(int label, double signal_strength) {
  const double sign = label == 1 ? 1.0 : -1.0;
  const double s = std::clamp(signal_strength, 0.0, 1.0) * sign;
  return {
      .speed = 0.8 * std::exp(0.45 * s),
      .jitter_px = 1.5 * std::exp(-0.5 * s),
      .submovement_rate = 1.0 * std::exp(-0.6 * s),
      .pause_prob = 0.06 * std::exp(-0.5 * s),
  };
}

Dataset generate(const SynthConfig& cfg) {
  if (cfg.n_sessions < 2) throw ConfigError("synthetic dataset needs at least 2 sessions");
  if (cfg.length.min > cfg.length.max) throw ConfigError("length min exceeds max");
  if (cfg.length.min < 1) throw ConfigError("length min must be at least 1");
  if (!(cfg.signal_strength >= 0.0 && cfg.signal_strength <= 1.0))
    throw ConfigError("signal_strength must lie in [0, 1]");
  if (cfg.viewport_w < 64 || cfg.viewport_h < 64) throw ConfigError("viewport too small");
  Dataset d;
  d.seed = cfg.seed;
  d.sessions.reserve(cfg.n_sessions);
  for (std::size_t i = 0; i < cfg.n_sessions; ++i) d.sessions.push_back(make_session(cfg, i));
  return d;
}

}  // namespace cursorprof::synth

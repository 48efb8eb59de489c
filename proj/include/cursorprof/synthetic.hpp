#pragma once

// Hermetic session generator with a planted, tunable demographic signal.

#include <cstddef>
#include <cstdint>

#include "cursorprof/session.hpp"

namespace cursorprof::synth {

// Number of mousemove events per session; draws are rounded and clipped.
struct LengthDistribution {
  double mean = 25.2;
  double sd = 18.7;
  std::size_t min = 11;
  std::size_t max = 221;
};

struct SynthConfig {
  std::size_t n_sessions = 200;
  double signal_strength = 1.0;  // [0, 1]
  Task label = Task::gender;
  LengthDistribution length;
  std::uint64_t seed = 0;
  int viewport_w = 1280;
  int viewport_h = 800;
};

// Class-dependent motor parameters. Class 1 (male / young) moves faster,
// with fewer corrective sub-movements, less jitter and fewer pauses; each
// gap scales as exp(+-k * signal_strength), so signal 0 makes them equal.
struct MotorProfile {
  double speed = 0.0;            // px/ms, before per-session variation
  double jitter_px = 0.0;        // sd of per-sample positional noise
  double submovement_rate = 0.0; // Poisson mean of corrective moves per reach
  double pause_prob = 0.0;       // per-sample probability of an idle gap
};

MotorProfile motor_profile(int label, double signal_strength);

// Sessions alternate labels (even index -> class 0) and are otherwise
// independent; session i draws from substream ("synth", i) of cfg.seed.
Dataset generate(const SynthConfig& cfg);

}  // namespace cursorprof::synth

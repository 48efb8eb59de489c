#pragma once

// Adversarial cursor noise: after every genuine mousemove, insert synthetic
// mousemoves displaced by at most sigma px from it and timed inside the gap
// to the next event.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cursorprof/rng.hpp"
#include "cursorprof/session.hpp"

namespace cursorprof::noise {

enum class SigmaMode { fixed, uniform };

// gaussian_radius: isotropic N(0, sigma) displacement, redrawn until it falls
// inside the sigma disc. uniform_radius: radius ~ U(0, sigma), angle ~
// U(0, 2 pi). Time jitter follows the same law in one dimension (ms).
enum class Distribution { gaussian_radius, uniform_radius };

struct NoiseConfig {
  SigmaMode mode = SigmaMode::fixed;
  double sigma = 0.25;  // fixed mode
  double low = 0.0;     // uniform mode: sigma ~ U(low, high) per sequence
  double high = 1.0;
  std::size_t events_per_gap = 1;
  Distribution distribution = Distribution::gaussian_radius;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const NoiseConfig&) const = default;
  nlohmann::json to_json() const;
  static NoiseConfig from_json(const nlohmann::json& j);
};

// "fixed:0.25", "uniform" (0..1) or "uniform:LOW:HIGH". Only the sigma
// fields of `base` are replaced.
NoiseConfig parse_sigma_spec(std::string_view spec, NoiseConfig base = {});
std::string sigma_spec(const NoiseConfig& cfg);

std::string_view to_string(Distribution d);
Distribution distribution_from(std::string_view name);

struct Distorted {
  std::vector<CursorEvent> events;
  // Per output event: -1 for a genuine event, otherwise the input index of
  // the mousemove it was derived from.
  std::vector<std::ptrdiff_t> anchor;
  double sigma = 0.0;
  // Insertions dropped because the gap was too narrow to hold a distinct
  // timestamp.
  std::size_t skipped = 0;
};

// Distorts one trajectory with a given sigma. Input times must be strictly
// increasing (PreconditionError otherwise). The gap after the last event is
// taken to equal the previous gap, or 150 ms when there is none. sigma == 0
// returns the input unchanged.
Distorted distort(std::span<const CursorEvent> events, double sigma, const NoiseConfig& cfg,
                  Rng& rng);

// As above, drawing sigma from rng first in uniform mode.
Distorted distort(std::span<const CursorEvent> events, const NoiseConfig& cfg, Rng& rng);

struct SessionNoise {
  std::string id;
  double sigma = 0.0;
  std::vector<std::ptrdiff_t> anchor;
  std::size_t skipped = 0;
};

// Session i uses substream ("noise", i) of cfg.seed. Split and seed carry
// over unchanged. Parallel over sessions.
Dataset distort_dataset(const Dataset& d, const NoiseConfig& cfg,
                        std::vector<SessionNoise>* provenance = nullptr);

// Distorts only the sessions in partition `p`; used for test-only noise.
Dataset distort_partition(const Dataset& d, Partition p, const NoiseConfig& cfg);

}  // namespace cursorprof::noise

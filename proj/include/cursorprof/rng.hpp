#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cursorprof {

using Rng = std::mt19937_64;

// Named substreams. These names are part of the stable interface: changing
// one changes every result that depends on it.
namespace stream {
inline constexpr std::string_view kSplit = "split";
inline constexpr std::string_view kHoldout = "holdout";
inline constexpr std::string_view kValidation = "validation";
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kShuffle = "shuffle";
inline constexpr std::string_view kDropout = "dropout";
inline constexpr std::string_view kNoise = "noise";
inline constexpr std::string_view kBootstrap = "bootstrap";
inline constexpr std::string_view kSynth = "synth";
}  // namespace stream

// Seed for substream `name`, element `index`, under `root`. Mixes with
// splitmix64 so neighbouring roots and indices give unrelated streams.
std::uint64_t substream_seed(std::uint64_t root, std::string_view name,
                             std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t root, std::string_view name,
                    std::uint64_t index = 0) {
  return Rng(substream_seed(root, name, index));
}

}  // namespace cursorprof

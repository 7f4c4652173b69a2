#pragma once

#include <cstdint>
#include <random>

namespace ipdf {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent child seeds from
// (seed, index) pairs so that per-record and per-epoch streams do not depend
// on generation order.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t index) { return Rng(mix_seed(seed, index)); }

}  // namespace ipdf

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dissflow {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent sub-stream seed from a parent seed and a label, so
/// each module of an experiment gets its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

/// Sequential engine for sampling; seeded through derive_seed.
using Engine = std::mt19937_64;

/// Counter-based Gaussian noise: the value depends only on (seed, counter
/// tuple), never on evaluation order, so parallel or reordered loops replay
/// bit-identically.
class CounterNormal {
 public:
  explicit CounterNormal(std::uint64_t seed) : seed_(seed) {}

  /// A pair of independent standard normals for (particle, step, pair).
  void pair(std::uint64_t particle, std::uint64_t step, std::uint64_t pair_index, double& z0,
            double& z1) const;

 private:
  std::uint64_t seed_;
};

}  // namespace dissflow

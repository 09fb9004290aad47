#include "dissflow/rng.hpp"

#include <cmath>
#include <numbers>

namespace dissflow {

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
  // FNV-1a over the label, then mixed with the parent.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(parent) ^ h);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return mix64(mix64(parent) + 0x632be59bd9b4e019ULL * (index + 1));
}

void CounterNormal::pair(std::uint64_t particle, std::uint64_t step, std::uint64_t pair_index,
                         double& z0, double& z1) const {
  std::uint64_t key = mix64(seed_ ^ mix64(particle));
  key = mix64(key ^ mix64(step + 0x5851f42d4c957f2dULL));
  key = mix64(key ^ pair_index);
  const std::uint64_t b0 = mix64(key);
  const std::uint64_t b1 = mix64(key ^ 0xda3e39cb94b95bdbULL);
  // 53-bit uniforms; u0 in (0, 1] keeps the log finite.
  const double u0 = (static_cast<double>(b0 >> 11) + 1.0) * 0x1.0p-53;
  const double u1 = static_cast<double>(b1 >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u0));
  const double theta = 2.0 * std::numbers::pi * u1;
  z0 = r * std::cos(theta);
  z1 = r * std::sin(theta);
}

}  // namespace dissflow

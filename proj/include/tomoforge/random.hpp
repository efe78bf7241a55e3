#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, counter), so results do not depend on the standard library
// implementation, thread count, or evaluation order.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace tomoforge {

struct RngSeed {
  std::uint64_t value = 0;
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Uniform double in the open interval (0, 1) for (seed, stream, counter).
inline double uniform01(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
  const std::uint64_t h = splitmix64(splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL)) + counter);
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two consecutive counters.
inline double standard_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
  const double u1 = uniform01(seed, stream, 2 * counter);
  const double u2 = uniform01(seed, stream, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace tomoforge

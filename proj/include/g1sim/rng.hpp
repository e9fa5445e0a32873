#pragma once

#include <cmath>
#include <cstdint>

namespace g1sim {

/// Purpose tags keep independent noise channels decorrelated under one seed.
enum class RngTag : std::uint64_t {
  DetectionDropout = 1,
  DetectionConfidence = 2,
  EstimatePosition = 3,
  EstimateRotationAxial = 4,
  EstimateRotationTransverse = 5,
};

/// Counter-based generator: every draw is a pure function of
/// (seed, frame, tag, draw index). Same key, same stream, on any thread.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t frame, std::uint64_t tag)
      : key_(mix(mix(mix(0x8f1bbcdcbfa53e0bULL, seed), frame), tag)) {}
  CounterRng(std::uint64_t seed, std::uint64_t frame, RngTag tag)
      : CounterRng(seed, frame, static_cast<std::uint64_t>(tag)) {}

  std::uint64_t next_u64() { return mix(key_, ++counter_); }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(kTwoPi_ * u2);
    have_cached_ = true;
    return r * std::cos(kTwoPi_ * u2);
  }

  double normal(double sigma) { return sigma * normal(); }

 private:
  static constexpr double kTwoPi_ = 6.283185307179586476925;

  // splitmix64-style avalanche of h combined with v
  static std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    std::uint64_t z = h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace g1sim

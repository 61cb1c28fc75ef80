#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

#include "imitlab/error.hpp"

namespace imitlab {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a base seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ mix_seed(stream + 0x5851f42d4c957f2dULL));
}

/// Random source with portable, fully specified draws.
///
/// The engine (mt19937_64) has a standard-defined output sequence; the
/// transforms below are written out explicitly instead of using the
/// <random> distributions, whose algorithms differ between standard
/// libraries. Given a seed, every draw is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open_low() { return 1.0 - uniform(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw ArgumentError("uniform_int: n must be positive");
    const auto bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<int>(x % bound);
  }

  /// Standard normal via Box-Muller (no cached second variate).
  double normal() {
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Index drawn from a discrete distribution given by nonnegative weights
  /// summing to ~1. Rounding slack falls on the last positive entry.
  int categorical(std::span<const double> probs) {
    const double u = uniform();
    double acc = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      last_positive = static_cast<int>(i);
      acc += probs[i];
      if (u < acc) return last_positive;
    }
    if (last_positive < 0) throw ValueError("categorical: no positive probability");
    return last_positive;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace imitlab

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace runet {

/// SplitMix64 generator (Steele, Lea & Flood 2014).
///
/// The integer stream is a pure function of the seed and is identical on every
/// platform. Floating-point draws are derived from it with exact scaling;
/// normal draws additionally go through libm log/cos/sqrt.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Uses rejection to stay unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t state() const { return state_; }

  /// Independent child seed for a named stream, e.g. derive(seed, {epoch, 2}).
  static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    Rng mix(seed ^ 0x6A09E667F3BCC909ULL);
    std::uint64_t out = mix.next_u64();
    for (std::uint64_t p : path) {
      Rng step(out ^ (p * 0x9E3779B97F4A7C15ULL + 0x3C6EF372FE94F82BULL));
      out = step.next_u64();
    }
    return out;
  }

private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace runet

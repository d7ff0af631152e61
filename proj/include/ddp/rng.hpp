#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ddp {

/// One SplitMix64 scrambling round.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent sub-stream seed from a base seed and a stream
/// index. Used for per-path, per-cell, and per-module streams so that work
/// items are reproducible regardless of execution order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream ^ 0xA5A5A5A5A5A5A5A5ULL));
}

/// Deterministic random source. The engine is std::mt19937_64, whose output
/// sequence is pinned by the C++ standard; the uniform and normal mappings
/// are written out here because the std distributions are
/// implementation-defined and would break byte-identical reproducibility.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Independent generator for sub-stream `stream` of a base seed.
  static Rng derived(std::uint64_t seed, std::uint64_t stream) {
    return Rng(mix_seed(seed, stream));
  }

  std::uint64_t raw() { return gen_(); }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive, via rejection sampling.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t range =
        static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(gen_());  // full span
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return lo + static_cast<std::int64_t>(x % range);
  }

  /// Standard normal via Box-Muller; both values of each pair are consumed,
  /// so every two calls cost exactly two engine draws.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace ddp

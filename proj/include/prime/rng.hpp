#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace prime {

/// Finalizer of the splitmix64 generator; full-avalanche 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Non-commutative seed/key combiner used to carve independent streams
/// out of one user-facing seed. Chain calls for multiple keys.
constexpr std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t key) {
  return mix64(seed ^ (key + 0x9e3779b97f4a7c15ull + (seed << 12) + (seed >> 4)));
}

constexpr std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t k1,
                                     std::uint64_t k2) {
  return combine_seed(combine_seed(seed, k1), k2);
}

// Stream tags. Arbitrary distinct constants; never reuse one for a new purpose.
namespace stream {
constexpr std::uint64_t kDirections = 0x64697273ull;   // per-pattern projection directions
constexpr std::uint64_t kReplication = 0x7265706cull;  // per-replication data generation
constexpr std::uint64_t kCvFolds = 0x63766f6cull;      // cross-validation fold shuffle
}  // namespace stream

/// Seeded generator with explicitly coded distribution transforms.
///
/// mt19937_64 is fully specified by the standard and the transforms below
/// avoid implementation-defined std::*_distribution, so a given seed yields
/// the same draw sequence on every platform this builds on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via the Marsaglia polar method (no trig, one cached spare).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  /// Unbiased uniform integer in [0, n); rejection sampling, n >= 1.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % n;
    }
  }

  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform_below(n));
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace prime

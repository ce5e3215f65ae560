#pragma once

// Seeded randomness shared by every module.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The distributions in <random> are not: libstdc++ and libc++
// produce different values from the same engine. The helpers below map
// engine output to doubles and bounded integers with a fixed algorithm so a
// seed reproduces the same run on every platform.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace varlen {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 finalizer. Bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// i-th output (0-based) of the SplitMix64 stream seeded with `key`.
/// Random access, so large lookup tables can be read lazily.
constexpr std::uint64_t splitmix_at(std::uint64_t key, std::uint64_t i) noexcept {
  return mix64(key + (i + 1) * kGoldenGamma);
}

/// Top 53 bits as a double in [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Folds a list of integers into a child seed. Order-sensitive.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p + kGoldenGamma));
  return h;
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform01() { return to_unit(engine_()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Rejection sampling on the top bits, unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool coin() { return (engine_() >> 63) != 0; }

  /// True with probability p.
  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Box-Muller; consumes two draws.
  double normal() {
    constexpr double kTwoPi = 6.283185307179586;
    double u1 = uniform01();
    const double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  // UniformRandomBitGenerator, for std::shuffle and friends in tests.
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  bool operator==(const Rng&) const = default;

 private:
  std::mt19937_64 engine_;
};

/// Draws `count` distinct values from [0, n) excluding `excluded`, in draw
/// order. Partial Fisher-Yates over the candidate list.
inline std::vector<std::uint32_t> sample_distinct(Rng& rng, std::uint32_t n, std::size_t count,
                                                  std::uint32_t excluded) {
  std::vector<std::uint32_t> pool;
  pool.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i)
    if (i != excluded) pool.push_back(i);
  if (count > pool.size()) throw std::invalid_argument("sample_distinct: not enough candidates");
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace varlen

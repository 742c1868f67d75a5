#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace mastune {

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed) noexcept { return splitmix64(seed); }

template <typename... Rest>
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t next, Rest... rest) noexcept {
  return mix_seed(splitmix64(seed ^ splitmix64(next + 0x632BE59BD9B4E019ULL)), rest...);
}

// FNV-1a over bytes, with a selectable offset basis.
constexpr std::uint64_t fnv1a64(std::string_view s,
                                std::uint64_t basis = 0xCBF29CE484222325ULL) noexcept {
  std::uint64_t h = basis;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Seeded random stream. The engine is std::mt19937_64; the distribution
// transforms are written out here so that draws are identical across
// standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Lemire-style rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; one uniform pair per draw, no cached second variate.
  double gaussian(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Index sampled from a probability vector (assumed normalized).
  template <typename Probs>
  std::size_t categorical(const Probs& probs) {
    const double u = uniform();
    double acc = 0.0;
    const std::size_t n = static_cast<std::size_t>(probs.size());
    for (std::size_t i = 0; i < n; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    // Rounding left a sliver above the last cumulative value.
    for (std::size_t i = n; i > 0; --i) {
      if (probs[i - 1] > 0.0) return i - 1;
    }
    return n - 1;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mastune

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace prefroute {

// Deterministic 64-bit generator (splitmix64 step). std::mt19937 plus the
// standard distributions would tie output bytes to the standard library
// implementation; this engine produces the same stream on every platform,
// which the reproducibility contract requires.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    // Rejection sampling to remove modulo bias.
    const std::uint64_t limit = bound * ((~std::uint64_t{0}) / bound);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % bound;
  }

  // Uniform integer in [lo, hi] inclusive.
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) {
    return lo + below(hi - lo + 1);
  }

  // Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; consumes two draws per call, no cache.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), returned in ascending order.
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k);

 private:
  std::uint64_t state_;
};

// Stable fan-out: one master seed plus a stage label plus an ordinal yields an
// independent child stream. Changing how many draws one stage makes never
// perturbs another stage.
std::uint64_t child_seed(std::uint64_t master, std::string_view label,
                         std::uint64_t index = 0);

}  // namespace prefroute

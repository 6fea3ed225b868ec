#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "passt/common.hpp"

namespace passt {

// Seeded RNG built on std::mt19937_64 (whose output sequence the standard
// pins down) with our own distribution code on top, because the standard
// library's distributions are implementation-defined and would break
// same-seed reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, bound) via rejection sampling.
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound == 0) throw Error("bounds", "uniform_below: bound must be > 0");
    std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller with cached spare.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1, u2;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  // Beta(a, b) via Johnk's algorithm; exact for small shape parameters,
  // which is where mixup operates.
  double beta(double a, double b) {
    for (;;) {
      double x = std::pow(uniform01(), 1.0 / a);
      double y = std::pow(uniform01(), 1.0 / b);
      if (x + y <= 1.0 && x + y > 0.0) return x / (x + y);
    }
  }

  // k distinct values from {0, ..., n-1}, uniformly without replacement
  // (partial Fisher-Yates), returned in ascending order.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k);

  // Shuffle indices 0..n-1 (full Fisher-Yates).
  std::vector<size_t> permutation(size_t n);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace passt

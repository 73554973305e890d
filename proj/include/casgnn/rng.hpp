#pragma once

#include <cstdint>
#include <random>

namespace casgnn {

/// Deterministic random source. Wraps std::mt19937 (whose output sequence is
/// fixed by the standard) and derives all values with explicit arithmetic
/// instead of std distributions, so identical seeds give identical streams on
/// every platform.
class Rng {
 public:
  explicit Rng(std::uint32_t seed) : gen_(seed) {}

  std::uint32_t next_u32() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return gen_() * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>((static_cast<std::uint64_t>(gen_()) * span) >> 32);
  }

  bool coin(double p = 0.5) { return uniform() < p; }

 private:
  std::mt19937 gen_;
};

}  // namespace casgnn

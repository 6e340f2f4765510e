#pragma once

#include <cstdint>
#include <random>

#include "mvalign/geometry.hpp"

namespace mvalign {

/// Seeded generator for synthetic data. Raw bits come from std::mt19937_64,
/// whose output sequence is fixed by the standard; the transforms to uniform
/// and normal variates are implemented here rather than taken from
/// <random>'s distributions, which are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  bool bernoulli(double p) { return uniform() < p; }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform direction on the unit sphere.
  Vec3 unit_vector();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mvalign

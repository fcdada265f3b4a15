#pragma once

#include <cstdint>

namespace segvit {

/// Counter-based generator: draw k is splitmix64(seed + k * golden). The
/// sequence depends only on (seed, counter), so it is identical on every
/// platform and the full state fits in two integers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t counter) : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Uniform integer in [lo, hi] inclusive.
  int range(int lo, int hi);
  // Standard normal via Box-Muller; consumes two draws, no cached spare.
  double normal();
  // Normal(0, std) resampled until it lies within +/- 2 std.
  double truncated_normal(double std);

  // Child generator for an independent stream.
  Rng split();

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace segvit

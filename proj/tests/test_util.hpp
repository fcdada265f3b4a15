#pragma once

#include <cstdint>

#include "segvit/rng.hpp"
#include "segvit/tensor.hpp"

namespace segvit::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return random_tensor(std::move(shape), rng, lo, hi);
}

}  // namespace segvit::testing

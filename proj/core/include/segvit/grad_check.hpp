#pragma once

#include <functional>

#include "segvit/tape.hpp"
#include "segvit/tensor.hpp"

namespace segvit {

// Scalar-valued function of one input, built fresh on the given tape.
using TapeFunction = std::function<Var(Tape&, const Var&)>;

/// Compares the tape gradient of f at x against central differences.
/// Returns max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
double finite_diff_check(const TapeFunction& f, const Tensor& x, double step = 1e-4);

/// Evaluates f(x) on a scratch tape and returns the scalar value.
double evaluate_scalar(const TapeFunction& f, const Tensor& x);

}  // namespace segvit

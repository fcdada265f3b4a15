#include "segvit/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "segvit/errors.hpp"

namespace segvit {

double evaluate_scalar(const TapeFunction& f, const Tensor& x) {
  Tape tape;
  Var in = tape.constant(x);
  Var out = f(tape, in);
  if (out.numel() != 1) {
    throw ContractViolation("finite_diff_check: f must be scalar, got shape " +
                            shape_str(out.shape()));
  }
  return out.value()[0];
}

double finite_diff_check(const TapeFunction& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw ContractViolation("finite_diff_check: step must be positive");
  Tensor analytic;
  {
    Tape tape;
    Var in = tape.leaf(x, true);
    Var out = f(tape, in);
    if (out.numel() != 1) {
      throw ContractViolation("finite_diff_check: f must be scalar, got shape " +
                              shape_str(out.shape()));
    }
    analytic = tape.backward(out).at(in);
  }
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = evaluate_scalar(f, probe);
    probe[i] = orig - step;
    const double down = evaluate_scalar(f, probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace segvit

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "grad_cases.hpp"
#include "segvit/errors.hpp"
#include "segvit/ops.hpp"
#include "segvit/params.hpp"
#include "segvit/tape.hpp"
#include "test_util.hpp"

namespace segvit {
namespace {

using testing::random_tensor;

TEST(Tensor, ShapeAndAccess) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  t.at({1, 2}) = 4.0;
  EXPECT_EQ(t[5], 4.0);
  EXPECT_THROW(t.at({2, 0}), BoundsError);
  EXPECT_THROW(t.dim(2), BoundsError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ContractViolation);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4, 2}), ContractViolation);
}

TEST(Tensor, BitIdentityDistinguishesSignedZero) {
  Tensor a({1}, 0.0);
  Tensor b({1}, -0.0);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(bit_identical(a, b));
}

TEST(Rng, DeterministicAndCounterBased) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(42, 50);
  Rng d(42);
  for (int i = 0; i < 50; ++i) d.next_u64();
  EXPECT_EQ(c.next_u64(), d.next_u64());
}

TEST(Rng, TruncatedNormalStaysInRange) {
  Rng r(3);
  for (int i = 0; i < 2000; ++i) {
    const double v = r.truncated_normal(0.02);
    EXPECT_LE(std::abs(v), 0.04);
  }
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(r.below(7));
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Tape, BackwardRejectsNonScalarAndSecondCall) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, 1.0));
  Var y = scale(x, 3.0);
  EXPECT_THROW(tape.backward(y), ContractViolation);
  Var loss = sum_all(y);
  GradientMap g = tape.backward(loss);
  EXPECT_DOUBLE_EQ(g.at(x)[0], 3.0);
  EXPECT_THROW(tape.backward(loss), ContractViolation);
}

TEST(Tape, ForeignVarRejected) {
  Tape a, b;
  Var x = a.leaf(Tensor::scalar(1.0));
  EXPECT_THROW(b.backward(x), ContractViolation);
}

TEST(Tape, GradientAccumulatesOverReuse) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(2.0));
  Var loss = add(mul(x, x), x);  // x^2 + x
  GradientMap g = tape.backward(loss);
  EXPECT_DOUBLE_EQ(g.at(x).item(), 5.0);
}

TEST(Tape, ConstantsGetNoGradient) {
  Tape tape;
  Var c = tape.constant(Tensor::scalar(2.0));
  Var x = tape.leaf(Tensor::scalar(3.0));
  GradientMap g = tape.backward(mul(c, x));
  EXPECT_EQ(g.find(c), nullptr);
  EXPECT_DOUBLE_EQ(g.at(x).item(), 2.0);
}

TEST(Ops, BroadcastRejectsNonSuffix) {
  Tape tape;
  Var a = tape.constant(Tensor({3, 4}));
  Var b = tape.constant(Tensor({3}));
  EXPECT_THROW(add(a, b), ContractViolation);
}

TEST(Ops, MatmulMatchesLoopOracle) {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 5}, rng);
  Tape tape;
  Tensor c = matmul(tape.constant(a), tape.constant(b)).value();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 5 + j];
      EXPECT_NEAR(c[i * 5 + j], s, 1e-12);
    }
  }
  EXPECT_THROW(matmul(tape.constant(a), tape.constant(a)), ContractViolation);
}

TEST(Ops, SoftmaxRowsSumToOneAndIsShiftInvariant) {
  Tensor x = random_tensor({4, 6}, 5, -10, 10);
  Tensor shifted = x;
  for (double& v : shifted.data()) v += 100.0;
  Tape tape;
  Tensor a = softmax(tape.constant(x), 1).value();
  Tensor b = softmax(tape.constant(shifted), 1).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 6; ++c) s += a[r * 6 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_LT(max_abs_diff(a, b), 1e-12);
}

TEST(Ops, LayerNormZeroMeanUnitVariance) {
  Tape tape;
  Tensor y = layer_norm(tape.constant(random_tensor({3, 8}, 9)), 1).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 8; ++c) m += y[r * 8 + c];
    m /= 8;
    for (std::size_t c = 0; c < 8; ++c) v += (y[r * 8 + c] - m) * (y[r * 8 + c] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 8, 1.0, 1e-4);
  }
}

TEST(Ops, GeluMatchesErfForm) {
  Tape tape;
  Tensor x = random_tensor({10}, 4, -3, 3);
  Tensor y = gelu(tape.constant(x)).value();
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(y[i], 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0))), 1e-14);
  }
}

// Half-pixel-centre bilinear interpolation with edge clamping.
Tensor bilinear_oracle(const Tensor& x, std::size_t oh, std::size_t ow) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out({n, oh, ow});
  auto src = [](std::size_t o, std::size_t in, std::size_t out_len) {
    double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) /
                   static_cast<double>(out_len) -
               0.5;
    return std::max(s, 0.0);
  };
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      const double sy = src(y, h, oh);
      const std::size_t y0 = std::min(static_cast<std::size_t>(sy), h - 1);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const double fy = sy - static_cast<double>(y0);
      for (std::size_t x_ = 0; x_ < ow; ++x_) {
        const double sx = src(x_, w, ow);
        const std::size_t x0 = std::min(static_cast<std::size_t>(sx), w - 1);
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const double fx = sx - static_cast<double>(x0);
        auto at = [&](std::size_t yy, std::size_t xx) { return x[(c * h + yy) * w + xx]; };
        out[(c * oh + y) * ow + x_] = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                                      fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
      }
    }
  }
  return out;
}

TEST(Ops, BilinearUpsampleMatchesOracle) {
  Tensor x = random_tensor({3, 4, 4}, 21);
  Tape tape;
  Tensor y = bilinear_upsample2d(tape.constant(x), 8, 8).value();
  EXPECT_LT(max_abs_diff(y, bilinear_oracle(x, 8, 8)), 1e-12);
  Tensor same = bilinear_upsample2d(tape.constant(x), 4, 4).value();
  EXPECT_LT(max_abs_diff(same, x), 1e-12);
}

TEST(Ops, GatherOutOfRangeIsBoundsError) {
  Tape tape;
  Var x = tape.constant(Tensor({3, 2}));
  std::vector<std::size_t> idx{0, 3};
  EXPECT_THROW(gather_rows(x, idx), BoundsError);
}

TEST(Ops, EveryPrimitiveHasAGradientCase) {
  std::set<Primitive> covered;
  for (const auto& c : testing::primitive_cases()) covered.insert(c.op);
  for (Primitive p : all_primitives()) {
    EXPECT_TRUE(covered.count(p)) << primitive_name(p);
  }
}

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  const auto cases = testing::primitive_cases();
  const auto& c = cases.at(GetParam());
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    EXPECT_LE(testing::check_primitive_case(c, seed), 1e-3) << c.label << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllCases, PrimitiveGradient,
                         ::testing::Range<std::size_t>(0, testing::primitive_cases().size()),
                         [](const auto& info) {
                           return testing::primitive_cases()[info.param].label;
                         });

TEST(Params, BinderRespectsFrozenFlag) {
  ParamStore store;
  store.add("a", Tensor({2}, 1.0));
  store.add("b", Tensor({2}, 2.0));
  store.set_frozen("b", true);
  EXPECT_THROW(store.add("a", Tensor({1})), ContractViolation);
  Tape tape;
  Binder bind(tape, store);
  EXPECT_TRUE(bind("a").requires_grad());
  EXPECT_FALSE(bind("b").requires_grad());
  EXPECT_EQ(bind("a").id(), bind("a").id());
  EXPECT_EQ(store.trainable_names(), std::vector<std::string>{"a"});
  EXPECT_EQ(store.frozen_names(), std::vector<std::string>{"b"});
}

TEST(Params, ChecksumTracksValueBytes) {
  ParamStore store;
  store.add("w", Tensor({3}, 0.5));
  const auto before = store.checksum({"w"});
  store.at("w").value[1] = 0.25;
  EXPECT_NE(before, store.checksum({"w"}));
}

}  // namespace
}  // namespace segvit

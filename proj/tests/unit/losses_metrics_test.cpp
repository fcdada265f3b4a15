#include <gtest/gtest.h>

#include <cmath>

#include "model_grad.hpp"
#include "segvit/errors.hpp"
#include "segvit/grad_check.hpp"
#include "segvit/losses.hpp"
#include "segvit/metrics.hpp"
#include "segvit/ops.hpp"
#include "test_util.hpp"

namespace segvit {
namespace {

using testing::random_tensor;

Tensor random_binary(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(s));
  for (double& x : t.data()) x = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return t;
}

TEST(PresenceTargets, Cases) {
  EXPECT_EQ(presence_targets(LabelMap(4, 4, 3), 5).storage(), (std::vector<double>{0, 0, 0, 1, 0}));
  LabelMap all(1, 4);
  all.labels = {0, 1, 2, 3};
  EXPECT_EQ(presence_targets(all, 4).storage(), (std::vector<double>(4, 1.0)));
  LabelMap bad(1, 1, 7);
  EXPECT_THROW(presence_targets(bad, 5), DataError);
  LabelMap ignored(2, 2, kIgnoreLabel);
  EXPECT_EQ(presence_targets(ignored, 3).storage(), (std::vector<double>(3, 0.0)));
  Rng rng(4);
  LabelMap r = testing::blocky_labels(16, 16, 6, rng);
  std::vector<int> hist(6, 0);
  for (auto v : r.labels) ++hist[v];
  Tensor t = presence_targets(r, 6);
  for (int c = 0; c < 6; ++c) EXPECT_EQ(t[c], hist[c] > 0 ? 1.0 : 0.0);
}

TEST(ClassificationLoss, Cases) {
  Tape tape;
  Tensor perfect({2, 2}, std::vector<double>{1e-9, 1 - 1e-9, 1 - 1e-9, 1e-9});
  EXPECT_LE(classification_loss(tape.constant(perfect), Tensor({2}, std::vector<double>{1, 0})).value().item(), 1e-8);
  EXPECT_NEAR(classification_loss(tape.constant(Tensor({3, 2}, 0.5)), Tensor({3}, std::vector<double>{1, 0, 1})).value().item(),
              std::log(2.0), 1e-12);
  Tensor p({4, 2});
  Tensor t({4}, std::vector<double>{1, 0, 0, 1});
  Rng rng(5);
  double ref = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    p[i * 2 + 1] = rng.uniform(0.05, 0.95);
    p[i * 2] = 1 - p[i * 2 + 1];
    ref += -std::log(p[i * 2 + static_cast<std::size_t>(t[i])]);
  }
  EXPECT_NEAR(classification_loss(tape.constant(p), t).value().item(), ref / 4, 1e-12);
}

TEST(FocalLoss, GammaZeroIsBce) {
  Tensor m = random_tensor({3, 5, 5}, 6, 0.01, 0.99);
  Tensor g = random_binary({3, 5, 5}, 7);
  Tape tape;
  double bce = 0.0;
  for (std::size_t i = 0; i < m.numel(); ++i) {
    bce += -(g[i] * std::log(m[i]) + (1 - g[i]) * std::log(1 - m[i]));
  }
  bce /= static_cast<double>(m.numel());
  EXPECT_NEAR(focal_loss(tape.constant(m), g, 0.0).value().item(), bce, 1e-9);
}

TEST(FocalLoss, PerfectAndOracle) {
  Tape tape;
  Tensor g = random_binary({2, 8}, 8);
  Tensor perfect = g;
  for (double& x : perfect.data()) x = x > 0.5 ? 1 - 1e-9 : 1e-9;
  EXPECT_LE(focal_loss(tape.constant(perfect), g, 2.0).value().item(), 1e-8);
  Tensor m = random_tensor({2, 8}, 9, 0.01, 0.99);
  double ref = 0.0;
  for (std::size_t i = 0; i < m.numel(); ++i) {
    const double pt = g[i] > 0.5 ? m[i] : 1 - m[i];
    ref += -(1 - pt) * (1 - pt) * std::log(pt);
  }
  EXPECT_NEAR(focal_loss(tape.constant(m), g, 2.0).value().item(), ref / 16, 1e-12);
}

TEST(FocalLoss, ValidMaskExcludesPixels) {
  Tape tape;
  Tensor m = random_tensor({2, 4}, 10, 0.1, 0.9);
  Tensor g = random_binary({2, 4}, 11);
  Tensor valid({4}, std::vector<double>{1, 0, 1, 0});
  double ref = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i : {0u, 2u}) {
      const double pt = g[c * 4 + i] > 0.5 ? m[c * 4 + i] : 1 - m[c * 4 + i];
      ref += -(1 - pt) * (1 - pt) * std::log(pt);
    }
  }
  EXPECT_NEAR(focal_loss(tape.constant(m), g, 2.0, valid).value().item(), ref / 4, 1e-12);
}

TEST(DiceLoss, Cases) {
  Tape tape;
  Tensor ones({1, 64, 64}, 1.0);
  const double bound = 1.0 / (2 * 64 * 64 + 1.0);
  EXPECT_LE(dice_loss(tape.constant(ones), ones, 1.0).value().item(), bound);
  Tensor left({1, 64, 64});
  Tensor right({1, 64, 64});
  for (std::size_t i = 0; i < 64 * 64; ++i) ((i % 64) < 32 ? left : right)[i] = 1.0;
  EXPECT_GE(dice_loss(tape.constant(left), right, 1.0).value().item(), 0.99);
  Tensor m = random_tensor({3, 10}, 12, 0, 1);
  Tensor g = random_binary({3, 10}, 13);
  double ref = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    double mg = 0, sm = 0, sg = 0;
    for (std::size_t i = 0; i < 10; ++i) {
      mg += m[c * 10 + i] * g[c * 10 + i];
      sm += m[c * 10 + i];
      sg += g[c * 10 + i];
    }
    ref += 1 - (2 * mg + 1) / (sm + sg + 1);
  }
  EXPECT_NEAR(dice_loss(tape.constant(m), g, 1.0).value().item(), ref / 3, 1e-12);
}

TEST(FocalDice, GradientsThroughSigmoidMatchFiniteDifferences) {
  Tensor g = random_binary({2, 3, 3}, 14);
  Tensor logits = random_tensor({2, 3, 3}, 15, -2, 2);
  TapeFunction f = [&](Tape&, const Var& x) {
    Var m = sigmoid(x);
    return add(scale(focal_loss(m, g, 2.0), 20.0), dice_loss(m, g, 1.0));
  };
  EXPECT_LE(finite_diff_check(f, logits), 1e-3);
}

TEST(TotalLoss, WeightedSumBookkeeping) {
  Tape tape;
  Tensor m = random_tensor({3, 6}, 16, 0.05, 0.95);
  Tensor g = random_binary({3, 6}, 17);
  Tensor p({3, 2}, std::vector<double>{0.3, 0.7, 0.6, 0.4, 0.2, 0.8});
  Tensor pres({3}, std::vector<double>{1, 0, 1});
  LossWeights w;
  EXPECT_EQ(w.focal, 20.0);
  EXPECT_EQ(w.dice, 1.0);
  MaskTarget t{tape.constant(m), tape.constant(p), g, {}, pres, 1.0};
  LossBreakdown b = total_loss({t}, w);
  const double cls = classification_loss(tape.constant(p), pres).value().item();
  const double focal = focal_loss(tape.constant(m), g, 2.0).value().item();
  const double dice = dice_loss(tape.constant(m), g, 1.0).value().item();
  EXPECT_EQ(b.cls, cls);
  EXPECT_EQ(b.focal, focal);
  EXPECT_EQ(b.dice, dice);
  EXPECT_EQ(b.total.value().item(), cls + 20.0 * focal + 1.0 * dice);
  EXPECT_GE(b.total.value().item(), 0.0);
  EXPECT_EQ(1.0 + 20.0 * 0.1 + 1.0 * 0.2, 3.2);
}

TEST(TotalLoss, AuxTermsAndEdgeAreAdded) {
  Tape tape;
  Tensor m = random_tensor({2, 4}, 18, 0.05, 0.95);
  Tensor g = random_binary({2, 4}, 19);
  Tensor p({2, 2}, 0.5);
  Tensor pres({2}, std::vector<double>{1, 0});
  MaskTarget a{tape.constant(m), tape.constant(p), g, {}, pres, 1.0};
  MaskTarget b = a;
  b.weight = 0.5;
  Var edge = tape.constant(Tensor::scalar(0.25));
  LossWeights w;
  w.edge = 2.0;
  LossBreakdown one = total_loss({a}, w);
  LossBreakdown both = total_loss({a, b}, w, edge);
  EXPECT_NEAR(both.total.value().item(), 1.5 * one.total.value().item() + 0.5, 1e-12);
  EXPECT_EQ(both.edge, 0.25);
}

TEST(PoolToTokens, AveragesValidPixels) {
  Tensor planes({1, 4, 4});
  planes[0] = 1.0;  // one pixel of the top-left 2x2 patch
  Tensor valid({4, 4}, 1.0);
  valid[1] = 0.0;
  Tensor vout;
  Tensor pooled = pool_to_tokens(planes, valid, 2, &vout);
  EXPECT_NEAR(pooled[0], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(pooled[1], 0.0);
  EXPECT_EQ(vout.storage(), (std::vector<double>(4, 1.0)));
}

LabelMap random_labels(std::size_t h, std::size_t w, std::size_t n, Rng& rng) {
  LabelMap m(h, w);
  for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng.below(n));
  return m;
}

TEST(Confusion, PerfectAndDisjoint) {
  Rng rng(20);
  LabelMap gt = random_labels(8, 8, 4, rng);
  ConfusionAccumulator acc(4);
  acc.accumulate(gt, gt);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(acc.intersection(c), acc.union_count(c));
  }
  EXPECT_EQ(acc.miou(), 1.0);
  ConfusionAccumulator d(3);
  d.accumulate(LabelMap(4, 4, 1), LabelMap(4, 4, 2));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(d.intersection(c), 0u);
  EXPECT_THROW(d.accumulate(LabelMap(4, 4), LabelMap(4, 5)), ContractViolation);
}

TEST(Confusion, RandomMatchesCountingOracle) {
  Rng rng(21);
  LabelMap pred = random_labels(10, 10, 5, rng);
  LabelMap gt = random_labels(10, 10, 5, rng);
  gt.labels[3] = kIgnoreLabel;
  ConfusionAccumulator acc(5);
  acc.accumulate(pred, gt);
  for (std::size_t c = 0; c < 5; ++c) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      if (gt.labels[i] == kIgnoreLabel) continue;
      const bool p = pred.labels[i] == c, g = gt.labels[i] == c;
      inter += p && g;
      uni += p || g;
    }
    EXPECT_EQ(acc.intersection(c), inter);
    EXPECT_EQ(acc.union_count(c), uni);
  }
}

TEST(Confusion, MergeIsAssociativeAndCommutative) {
  Rng rng(22);
  std::vector<ConfusionAccumulator> shards;
  for (int i = 0; i < 3; ++i) {
    ConfusionAccumulator a(4);
    a.accumulate(random_labels(6, 6, 4, rng), random_labels(6, 6, 4, rng));
    shards.push_back(a);
  }
  ConfusionAccumulator ab_c = shards[0];
  ab_c.merge(shards[1]);
  ab_c.merge(shards[2]);
  ConfusionAccumulator c_ba = shards[2];
  c_ba.merge(shards[1]);
  c_ba.merge(shards[0]);
  EXPECT_EQ(ab_c, c_ba);
}

TEST(GroupedMiou, Cases) {
  Rng rng(23);
  LabelMap pred = random_labels(12, 12, 6, rng);
  LabelMap gt = random_labels(12, 12, 6, rng);
  ConfusionAccumulator acc(6);
  acc.accumulate(pred, gt);
  GroupedMiou one = grouped_miou(acc, {{0, 1, 2, 3, 4, 5}});
  EXPECT_EQ(one.groups[0], acc.miou());
  GroupedMiou two = grouped_miou(acc, {{0, 1, 2}, {3, 4, 5}});
  double g0 = 0;
  for (std::size_t c : {0, 1, 2}) {
    g0 += static_cast<double>(acc.intersection(c)) / static_cast<double>(acc.union_count(c));
  }
  EXPECT_NEAR(two.groups[0], g0 / 3, 1e-12);
  EXPECT_THROW(grouped_miou(acc, {{0, 1}, {1, 2}}), ContractViolation);
  ConfusionAccumulator perfect(3);
  perfect.accumulate(gt.labels.empty() ? LabelMap() : LabelMap(2, 2, 1), LabelMap(2, 2, 1));
  EXPECT_EQ(grouped_miou(perfect, {{1}}).groups[0], 1.0);
  EXPECT_TRUE(std::isnan(grouped_miou(perfect, {{0, 2}}).groups[0]));
}

TEST(GroupedMiou, RelabelingInvariant) {
  Rng rng(24);
  LabelMap pred = random_labels(8, 8, 4, rng);
  LabelMap gt = random_labels(8, 8, 4, rng);
  const std::uint8_t perm[] = {2, 3, 0, 1};
  LabelMap p2 = pred, g2 = gt;
  for (auto& v : p2.labels) v = perm[v];
  for (auto& v : g2.labels) v = perm[v];
  ConfusionAccumulator a(4), b(4);
  a.accumulate(pred, gt);
  b.accumulate(p2, g2);
  EXPECT_NEAR(a.miou(), b.miou(), 1e-15);
}

class ComposedGradient : public ::testing::TestWithParam<int> {};

TEST_P(ComposedGradient, LossMatchesFiniteDifferences) {
  const Variant v = static_cast<Variant>(GetParam());
  auto r = testing::composite_grad_check(testing::tiny_model_config(v), 100 + GetParam(), 4);
  EXPECT_LE(r.worst, 1e-3) << r.worst_param;
  EXPECT_GT(r.checked, 50u);
}

INSTANTIATE_TEST_SUITE_P(Variants, ComposedGradient, ::testing::Values(0, 1, 2));

TEST(ComposedGradient, LinearHead) {
  auto r = testing::composite_grad_check(testing::tiny_model_config(Variant::kSingle, HeadKind::kLinear), 7, 4);
  EXPECT_LE(r.worst, 1e-3) << r.worst_param;
}

}  // namespace
}  // namespace segvit

#include "segvit/losses.hpp"

#include <algorithm>

#include "segvit/errors.hpp"
#include "segvit/ops.hpp"

namespace segvit {

namespace {

constexpr double kProbFloor = 1e-12;

std::size_t broadcast_count(const Shape& mask, const Tensor& valid) {
  if (valid.empty()) return numel_of(mask);
  const Shape& v = valid.shape();
  if (v.size() > mask.size() || !std::equal(v.begin(), v.end(), mask.end() - v.size())) {
    throw ContractViolation("loss: valid mask " + shape_str(v) + " does not trail " +
                            shape_str(mask));
  }
  double s = 0.0;
  for (double x : valid.data()) s += x;
  return static_cast<std::size_t>(s) * (numel_of(mask) / valid.numel());
}

void check_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ContractViolation(std::string(what) + ": " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

void LossWeights::validate() const {
  if (focal < 0 || dice < 0 || edge < 0 || focal_gamma < 0 || aux < 0) {
    throw ContractViolation("loss weights must be non-negative");
  }
  if (!(dice_smooth > 0)) throw ContractViolation("dice smoothing must be positive");
}

Tensor presence_targets(const LabelMap& labels, std::size_t num_classes) {
  Tensor t({num_classes});
  for (std::uint8_t v : labels.labels) {
    if (v == kIgnoreLabel) continue;
    if (v >= num_classes) {
      throw DataError("presence_targets: label " + std::to_string(v) + " >= " +
                      std::to_string(num_classes) + " classes");
    }
    t[v] = 1.0;
  }
  return t;
}

Tensor one_hot_masks(const LabelMap& labels, std::size_t num_classes) {
  const std::size_t plane = labels.size();
  Tensor t({num_classes, labels.height, labels.width});
  for (std::size_t p = 0; p < plane; ++p) {
    const std::uint8_t v = labels.labels[p];
    if (v == kIgnoreLabel) continue;
    if (v >= num_classes) {
      throw DataError("one_hot_masks: label " + std::to_string(v) + " >= " +
                      std::to_string(num_classes) + " classes");
    }
    t[v * plane + p] = 1.0;
  }
  return t;
}

Tensor valid_pixels(const LabelMap& labels) {
  Tensor t({labels.height, labels.width});
  for (std::size_t p = 0; p < labels.size(); ++p) t[p] = labels.labels[p] == kIgnoreLabel ? 0.0 : 1.0;
  return t;
}

Tensor pool_to_tokens(const Tensor& planes, const Tensor& valid, std::size_t p,
                      Tensor* valid_out) {
  const Shape& s = planes.shape();
  if (s.size() != 3 || valid.shape() != Shape{s[1], s[2]}) {
    throw ContractViolation("pool_to_tokens: planes " + shape_str(s) + " with valid " +
                            shape_str(valid.shape()));
  }
  if (p == 0 || s[1] % p != 0 || s[2] % p != 0) {
    throw ContractViolation("pool_to_tokens: extent not divisible by patch " + std::to_string(p));
  }
  const std::size_t n = s[0], h = s[1], w = s[2];
  const std::size_t gw = w / p;
  const std::size_t l = (h / p) * gw;
  Tensor out({n, l});
  std::vector<double> counts(l, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (valid[y * w + x] == 0.0) continue;
      const std::size_t t = (y / p) * gw + x / p;
      counts[t] += 1.0;
      for (std::size_t c = 0; c < n; ++c) out[c * l + t] += planes[(c * h + y) * w + x];
    }
  }
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t t = 0; t < l; ++t) {
      if (counts[t] > 0) out[c * l + t] /= counts[t];
    }
  }
  if (valid_out) {
    *valid_out = Tensor({l});
    for (std::size_t t = 0; t < l; ++t) (*valid_out)[t] = counts[t] > 0 ? 1.0 : 0.0;
  }
  return out;
}

Var classification_loss(const Var& class_probs, const Tensor& targets) {
  const Shape& s = class_probs.shape();
  if (s.size() != 2 || s[1] != 2 || targets.numel() != s[0]) {
    throw ContractViolation("classification_loss: probs " + shape_str(s) + " vs " +
                            std::to_string(targets.numel()) + " targets");
  }
  Tensor pick({s[0], 2});
  for (std::size_t c = 0; c < s[0]; ++c) pick[c * 2 + (targets[c] > 0.5 ? 1 : 0)] = 1.0;
  Var p = clamp(class_probs, kProbFloor, 1.0);
  Var chosen = sum(mul(p, class_probs.tape().constant(std::move(pick))), 1);
  return scale(mean_all(log(chosen)), -1.0);
}

Var focal_loss(const Var& mask, const Tensor& gt, double gamma, const Tensor& valid) {
  check_same(mask.shape(), gt.shape(), "focal_loss");
  if (gamma < 0) throw ContractViolation("focal_loss: gamma must be non-negative");
  Tape& tape = mask.tape();
  const std::size_t count = broadcast_count(mask.shape(), valid);
  if (count == 0) return tape.constant(Tensor::scalar(0.0));
  Tensor offset(gt.shape());
  Tensor slope(gt.shape());
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    offset[i] = 1.0 - gt[i];
    slope[i] = 2.0 * gt[i] - 1.0;
  }
  Var p = clamp(mask, kProbFloor, 1.0 - kProbFloor);
  Var pt = add(mul(p, tape.constant(std::move(slope))), tape.constant(std::move(offset)));
  Var elem = log(pt);
  if (gamma != 0.0) elem = mul(pow_scalar(add_scalar(scale(pt, -1.0), 1.0), gamma), elem);
  if (!valid.empty()) elem = mul(elem, tape.constant(valid));
  return scale(sum_all(elem), -1.0 / static_cast<double>(count));
}

Var dice_loss(const Var& mask, const Tensor& gt, double smooth, const Tensor& valid) {
  check_same(mask.shape(), gt.shape(), "dice_loss");
  if (!(smooth > 0)) throw ContractViolation("dice_loss: smooth must be positive");
  if (mask.shape().empty()) throw ContractViolation("dice_loss: mask needs a class axis");
  Tape& tape = mask.tape();
  const std::size_t n = mask.shape()[0];
  const std::size_t rest = n == 0 ? 0 : mask.numel() / n;
  broadcast_count(mask.shape(), valid);
  Var m = valid.empty() ? mask : mul(mask, tape.constant(valid));
  Tensor g = gt;
  if (!valid.empty()) {
    const std::size_t vn = valid.numel();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= valid[i % vn];
  }
  Tensor g_sum({n});
  for (std::size_t c = 0; c < n; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < rest; ++i) s += g[c * rest + i];
    g_sum[c] = s + smooth;
  }
  Var m2 = reshape(m, {n, rest});
  Var inter = sum(mul(m2, tape.constant(g.reshaped({n, rest}))), 1);
  Var num = add_scalar(scale(inter, 2.0), smooth);
  Var den = add(sum(m2, 1), tape.constant(std::move(g_sum)));
  return add_scalar(scale(mean_all(div(num, den)), -1.0), 1.0);
}

LossBreakdown total_loss(const std::vector<MaskTarget>& terms, const LossWeights& w,
                         const Var& edge_term) {
  w.validate();
  if (terms.empty()) throw ContractViolation("total_loss: no terms");
  LossBreakdown out;
  for (const MaskTarget& t : terms) {
    Var cls = classification_loss(t.class_probs, t.presence);
    Var focal = focal_loss(t.mask, t.gt, w.focal_gamma, t.valid);
    Var dice = dice_loss(t.mask, t.gt, w.dice_smooth, t.valid);
    Var term = add(add(cls, scale(focal, w.focal)), scale(dice, w.dice));
    if (t.weight != 1.0) term = scale(term, t.weight);
    out.total = out.total.valid() ? add(out.total, term) : term;
    out.cls += t.weight * cls.value().item();
    out.focal += t.weight * focal.value().item();
    out.dice += t.weight * dice.value().item();
  }
  if (edge_term.valid()) {
    out.edge = edge_term.value().item();
    out.total = add(out.total, scale(edge_term, w.edge));
  }
  return out;
}

}  // namespace segvit

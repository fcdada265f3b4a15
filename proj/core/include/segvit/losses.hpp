#pragma once

#include <cstddef>
#include <vector>

#include "segvit/labels.hpp"
#include "segvit/tape.hpp"
#include "segvit/tensor.hpp"

namespace segvit {

struct LossWeights {
  double focal = 20.0;
  double dice = 1.0;
  double edge = 1.0;
  double focal_gamma = 2.0;
  double dice_smooth = 1.0;
  double aux = 1.0;  // weight of each per-stage auxiliary term

  void validate() const;
};

// t_c = 1 iff some pixel carries label c. Ignore pixels are skipped.
Tensor presence_targets(const LabelMap& labels, std::size_t num_classes);

// One-hot planes [N, H, W] of the label map; ignore pixels are all zero.
Tensor one_hot_masks(const LabelMap& labels, std::size_t num_classes);
// 1 for pixels that take part in mask losses, [H, W].
Tensor valid_pixels(const LabelMap& labels);

// Average-pools [N, H, W] planes over P x P patches into [N, L], counting
// only valid pixels. `valid_out` receives [L]: 1 where a patch has any
// valid pixel.
Tensor pool_to_tokens(const Tensor& planes, const Tensor& valid, std::size_t patch_size,
                      Tensor* valid_out = nullptr);

// Mean over classes of -ln p(correct presence bit).
Var classification_loss(const Var& class_probs, const Tensor& targets);

// Mean over valid elements of -(1 - p_t)^gamma ln p_t. `valid` broadcasts
// over the trailing dimensions of `mask`; pass an empty tensor for all.
Var focal_loss(const Var& mask, const Tensor& gt, double gamma, const Tensor& valid = {});

// Mean over classes of 1 - (2 sum(m g) + s) / (sum m + sum g + s).
Var dice_loss(const Var& mask, const Tensor& gt, double smooth, const Tensor& valid = {});

/// Supervision for one (mask, class) pair. The mask axis 0 indexes classes.
struct MaskTarget {
  Var mask;
  Var class_probs;
  Tensor gt;        // same shape as mask
  Tensor valid;     // trailing shape of mask, or empty
  Tensor presence;  // [N]
  double weight = 1.0;
};

struct LossBreakdown {
  Var total;
  double cls = 0.0;    // weighted sums across terms, before the lambdas
  double focal = 0.0;
  double dice = 0.0;
  double edge = 0.0;
};

// sum_i weight_i (cls_i + l_focal focal_i + l_dice dice_i) + l_edge edge.
LossBreakdown total_loss(const std::vector<MaskTarget>& terms, const LossWeights& w,
                         const Var& edge_term = {});

}  // namespace segvit

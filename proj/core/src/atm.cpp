#include "segvit/atm.hpp"

#include <cmath>

#include "segvit/errors.hpp"
#include "segvit/ops.hpp"

namespace segvit {

QkvProjection project_qkv(const Var& class_tokens, const Var& features, const LinearVars& q,
                          const LinearVars& k, const LinearVars& v) {
  if (class_tokens.shape().size() != 2 || features.shape().size() != 2 ||
      class_tokens.shape()[1] != features.shape()[1]) {
    throw ContractViolation("project_qkv: class tokens " + shape_str(class_tokens.shape()) +
                            " and features " + shape_str(features.shape()) +
                            " differ in width");
  }
  return {linear(class_tokens, q), linear(features, k), linear(features, v)};
}

Var similarity_map(const Var& q, const Var& k) {
  if (q.shape().size() != 2 || k.shape().size() != 2 || q.shape()[1] != k.shape()[1]) {
    throw ContractViolation("similarity_map: widths differ, q" + shape_str(q.shape()) + " k" +
                            shape_str(k.shape()));
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.shape()[1]));
  return scale(matmul(q, k, true), inv);
}

Var atm_cross_attention(const Var& sim, const Var& v) {
  if (sim.shape().size() != 2 || v.shape().size() != 2 || sim.shape()[1] != v.shape()[0]) {
    throw ContractViolation("atm_cross_attention: sim " + shape_str(sim.shape()) +
                            " incompatible with values " + shape_str(v.shape()));
  }
  return matmul(softmax(sim, 1), v);
}

Var atm_cross_attention(const Var& q, const Var& k, const Var& v, std::size_t heads) {
  return multi_head_attention(q, k, v, heads).context;
}

Var attention_to_mask(const Var& sim) { return sigmoid(sim); }

AtmStageOutput atm_stage(const Var& class_tokens, const TokenGrid& features, const BlockVars& w,
                         std::size_t heads) {
  Var gn = norm(class_tokens, w.norm_q);
  Var fn = norm(features.tokens, w.norm_kv);
  QkvProjection p = project_qkv(gn, fn, w.q, w.k, w.v);
  Var sim = similarity_map(p.q, p.k);
  Var mask = attention_to_mask(sim);
  Var updated = add(class_tokens, linear(atm_cross_attention(p.q, p.k, p.v, heads), w.out));
  return {sim, mask, mlp_residual(updated, w)};
}

CascadeOutput cascade_decode(const Var& class_tokens, const std::vector<TokenGrid>& taps,
                             const std::vector<BlockVars>& stages, std::size_t heads) {
  if (taps.empty()) throw ContractViolation("cascade_decode: no taps");
  if (stages.size() != taps.size()) {
    throw ContractViolation("cascade_decode: " + std::to_string(stages.size()) + " stages for " +
                            std::to_string(taps.size()) + " taps");
  }
  CascadeOutput out;
  out.grid = taps.back().grid;
  Var g = class_tokens;
  Var mask_sum;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const TokenGrid& tap = taps[taps.size() - 1 - i];
    if (!(tap.grid == out.grid)) throw ContractViolation("cascade_decode: taps on different grids");
    AtmStageOutput s = atm_stage(g, tap, stages[i], heads);
    mask_sum = mask_sum.valid() ? add(mask_sum, s.mask) : s.mask;
    g = s.tokens;
    out.stages.push_back(s);
  }
  out.combined_mask =
      stages.size() == 1 ? mask_sum : scale(mask_sum, 1.0 / static_cast<double>(stages.size()));
  out.final_tokens = g;
  return out;
}

Var classify_tokens(const Var& tokens, const Var& classifier) {
  if (classifier.shape().size() != 2 || classifier.shape()[1] != 2) {
    throw ContractViolation("classify_tokens: classifier must be [C, 2], got " +
                            shape_str(classifier.shape()));
  }
  return softmax(matmul(tokens, classifier), 1);
}

SegOutput assemble_segmentation(const Var& combined_mask, GridSize grid, const Var& class_probs,
                                std::size_t height, std::size_t width) {
  const Shape& s = combined_mask.shape();
  if (s.size() != 2 || s[1] != grid.count()) {
    throw ContractViolation("assemble_segmentation: mask " + shape_str(s) + " does not fit grid " +
                            std::to_string(grid.h) + "x" + std::to_string(grid.w));
  }
  const std::size_t n = s[0];
  if (class_probs.shape() != Shape{n, 2}) {
    throw ContractViolation("assemble_segmentation: class_probs " +
                            shape_str(class_probs.shape()) + " for " + std::to_string(n) +
                            " classes");
  }
  Var planes = reshape(combined_mask, {n, grid.h, grid.w});
  Var masks = bilinear_upsample2d(planes, height, width);
  Var presence = reshape(slice(class_probs, 1, 1, 2), {n});
  return {masks, class_probs, scale_rows(masks, presence)};
}

LabelMap predict_labels(const Tensor& seg_scores) {
  const Shape& s = seg_scores.shape();
  if (s.size() != 3 || s[0] == 0) {
    throw ContractViolation("predict_labels: expected [N, H, W] with N >= 1, got " + shape_str(s));
  }
  if (s[0] > 255) throw ContractViolation("predict_labels: more than 255 classes");
  const std::size_t n = s[0];
  const std::size_t plane = s[1] * s[2];
  LabelMap out(s[1], s[2]);
  auto d = seg_scores.data();
  for (std::size_t p = 0; p < plane; ++p) {
    std::size_t best = 0;
    double best_v = d[p];
    for (std::size_t c = 1; c < n; ++c) {
      const double v = d[c * plane + p];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out.labels[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

void init_decoder(ParamStore& store, const std::string& prefix, std::size_t num_classes,
                  std::size_t width, std::size_t num_stages, double mlp_ratio, Rng& rng) {
  if (num_classes == 0) throw ContractViolation("decoder: needs at least one class");
  store.add(prefix + ".class_tokens", trunc_normal({num_classes, width}, rng));
  for (std::size_t i = 1; i <= num_stages; ++i) {
    init_block(store, prefix + ".stage" + std::to_string(i), width, mlp_ratio, rng, false);
  }
  store.add(prefix + ".classifier", trunc_normal({width, 2}, rng));
}

DecoderVars bind_decoder(Binder& bind, const std::string& prefix, std::size_t num_stages) {
  DecoderVars w;
  w.class_tokens = bind(prefix + ".class_tokens");
  for (std::size_t i = 1; i <= num_stages; ++i) {
    w.stages.push_back(bind_block(bind, prefix + ".stage" + std::to_string(i), false));
  }
  w.classifier = bind(prefix + ".classifier");
  return w;
}

std::size_t decoder_param_count(std::size_t num_classes, std::size_t width, std::size_t num_stages,
                                double mlp_ratio) {
  return num_classes * width + num_stages * block_param_count(width, mlp_ratio, false) + width * 2;
}

}  // namespace segvit

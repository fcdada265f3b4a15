#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "segvit/encoder.hpp"
#include "segvit/labels.hpp"
#include "segvit/layers.hpp"

// Attention-to-Mask decoder: class tokens cross-attend to backbone taps;
// the sigmoid of the pre-softmax similarity map is the per-class mask.
namespace segvit {

struct QkvProjection {
  Var q;  // [N, C]
  Var k;  // [L, C]
  Var v;  // [L, C]
};

QkvProjection project_qkv(const Var& class_tokens, const Var& features, const LinearVars& q,
                          const LinearVars& k, const LinearVars& v);

// sim[i, j] = <q_i, k_j> / sqrt(C)
Var similarity_map(const Var& q, const Var& k);

// Single-head form: softmax(sim) V along the token axis.
Var atm_cross_attention(const Var& sim, const Var& v);
// Multi-head form: C split into heads, outputs concatenated.
Var atm_cross_attention(const Var& q, const Var& k, const Var& v, std::size_t heads);

Var attention_to_mask(const Var& sim);

struct AtmStageOutput {
  Var sim;     // [N, L]
  Var mask;    // [N, L] == sigmoid(sim)
  Var tokens;  // [N, C]
};

// Cross-attention plus MLP with residuals; no self-attention among class tokens.
AtmStageOutput atm_stage(const Var& class_tokens, const TokenGrid& features, const BlockVars& w,
                         std::size_t heads);

struct CascadeOutput {
  Var combined_mask;  // [N, L], mean of the stage masks
  Var final_tokens;   // [N, C]
  std::vector<AtmStageOutput> stages;
  GridSize grid;
};

// taps ordered shallow to deep; stage 1 consumes the deepest tap.
CascadeOutput cascade_decode(const Var& class_tokens, const std::vector<TokenGrid>& taps,
                             const std::vector<BlockVars>& stages, std::size_t heads);

// Row-wise softmax(tokens W); column 1 is the presence probability.
Var classify_tokens(const Var& tokens, const Var& classifier);

struct SegOutput {
  Var masks;        // [N, H, W]
  Var class_probs;  // [N, 2]
  Var seg_scores;   // [N, H, W], masks scaled by P_c
};

SegOutput assemble_segmentation(const Var& combined_mask, GridSize grid, const Var& class_probs,
                                std::size_t height, std::size_t width);

// Per-pixel argmax over classes; ties go to the lowest class index.
LabelMap predict_labels(const Tensor& seg_scores);

struct DecoderVars {
  Var class_tokens;  // [N, C]
  std::vector<BlockVars> stages;
  Var classifier;  // [C, 2]
};

void init_decoder(ParamStore& store, const std::string& prefix, std::size_t num_classes,
                  std::size_t width, std::size_t num_stages, double mlp_ratio, Rng& rng);
DecoderVars bind_decoder(Binder& bind, const std::string& prefix, std::size_t num_stages);
std::size_t decoder_param_count(std::size_t num_classes, std::size_t width, std::size_t num_stages,
                                double mlp_ratio);

}  // namespace segvit

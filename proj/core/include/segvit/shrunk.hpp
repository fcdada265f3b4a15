#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "segvit/encoder.hpp"
#include "segvit/labels.hpp"
#include "segvit/layers.hpp"
#include "segvit/token_schedule.hpp"

// Shrunk and Shrunk++ encoder variants: query downsampling (QD), query
// upsampling (QU) and the edge-aware selection used by Shrunk++.
namespace segvit {

enum class Variant { kSingle, kShrunk, kShrunkPP };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct TokenSelection {
  std::vector<std::size_t> retained;  // sorted, unique
  GridSize source_grid;
  std::optional<GridSize> target_grid;  // set for regular stride selections

  std::size_t size() const noexcept { return retained.size(); }
};

struct ShrunkConfig {
  Variant variant = Variant::kSingle;
  // Shrunk: layers 1..qd_layer run at full resolution and layer qd_layer+1
  // is the QD layer. Shrunk++: must be 0 (selection before layer 1).
  std::size_t qd_layer = 0;
  std::size_t qd_stride = 2;
  bool high_res_store = true;
  double edge_threshold = 0.7;

  void validate(const EncoderConfig& enc) const;
};

// Top-left token of every stride x stride cell, row-major.
TokenSelection nearest_anchor_indices(GridSize grid, std::size_t stride);

// Anchors united with every token whose edge mask entry is 1.
TokenSelection eqd_select(GridSize grid, std::size_t stride, const Tensor& edge_mask);

// Encoder layer whose queries are the selected tokens; keys and values are
// all tokens. Irregular selections produce a 1 x n grid.
TokenGrid qd_layer(const TokenGrid& tg, const TokenSelection& sel, const BlockVars& w,
                   std::size_t heads);

// Cross-attention from `queries` to `kv` plus MLP. Output has the query grid.
TokenGrid qu_layer(const TokenGrid& queries, const TokenGrid& kv, const BlockVars& w,
                   std::size_t heads);

struct EdgeHeadVars {
  LinearVars fc1;  // C_in -> C
  LinearVars fc2;  // C -> C/2
  LinearVars fc3;  // C/2 -> 2
};

void init_edge_head(ParamStore& store, const std::string& prefix, std::size_t in_width,
                    std::size_t width, Rng& rng);
EdgeHeadVars bind_edge_head(Binder& bind, const std::string& prefix);

// Softmax over a three-layer GELU MLP; column 1 is the edge probability.
Var edge_head_forward(const Var& tokens, const EdgeHeadVars& head);

// 1 where edge_probs[:, 1] >= tau. Accepts [L, 2] or [L].
Tensor edge_mask_from_scores(const Tensor& edge_probs, double tau);

// Pixel is an edge pixel when a 4-neighbour has a different label; a patch
// is marked when it holds at least one edge pixel.
Tensor gt_edge_mask(const LabelMap& labels, std::size_t patch_size);

// Mean binary cross-entropy of edge_probs[:, 1] against the 0/1 target.
Var edge_loss(const Var& edge_probs, const Tensor& gt_mask);

struct ShrunkVars {
  Var store_queries;                   // Shrunk
  BlockVars store_qu;                  // Shrunk
  std::vector<BlockVars> restore;      // one per tap; unbound for taps not restored
  std::vector<bool> restored;          // parallel to restore
  EdgeHeadVars edge;                   // Shrunk++
  Var full_queries;                    // Shrunk++
};

void init_shrunk(ParamStore& store, const EncoderConfig& enc, const ShrunkConfig& cfg, Rng& rng);
ShrunkVars bind_shrunk(Binder& bind, const EncoderConfig& enc, const ShrunkConfig& cfg);
std::size_t shrunk_param_count(const EncoderConfig& enc, const ShrunkConfig& cfg);

struct ShrunkResult {
  std::vector<TokenGrid> taps;  // full-resolution grids, shallow to deep
  TokenSchedule schedule;       // executed attention layers in order
  TokenSelection selection;
  Var edge_probs;               // Shrunk++ only
  Tensor edge_mask;             // Shrunk++ only
};

ShrunkResult shrunk_forward(Tape& tape, const Tensor& image, const EncoderConfig& enc,
                            const ShrunkConfig& cfg, const EncoderVars& ew, const ShrunkVars& sw);

// `edge_mask_override` replaces the thresholded edge prediction when given.
ShrunkResult shrunkpp_forward(Tape& tape, const Tensor& image, const EncoderConfig& enc,
                              const ShrunkConfig& cfg, const EncoderVars& ew, const ShrunkVars& sw,
                              const Tensor* edge_mask_override = nullptr);

// Dense encoder with its schedule, for comparison against the variants.
ShrunkResult single_forward(Tape& tape, const Tensor& image, const EncoderConfig& enc,
                            const EncoderVars& ew);

}  // namespace segvit

#pragma once

#include <cstddef>
#include <string>

#include "segvit/params.hpp"
#include "segvit/tape.hpp"

// Building blocks shared by the encoder, QD/QU layers and ATM stages.
namespace segvit {

struct LinearVars {
  Var weight;  // [in, out]
  Var bias;    // [out]; invalid when the layer has no bias
};

struct NormVars {
  Var gain;
  Var bias;
};

/// Pre-norm attention block with separate norms for the query and
/// key/value streams (aliased for self-attention) followed by an MLP.
struct BlockVars {
  NormVars norm_q;
  NormVars norm_kv;
  LinearVars q, k, v, out;
  NormVars norm_mlp;
  LinearVars fc1, fc2;
};

LinearVars bind_linear(Binder& bind, const std::string& prefix, bool bias = true);
NormVars bind_norm(Binder& bind, const std::string& prefix);
// With `self_attention`, norm_kv binds to the same parameters as norm_q.
BlockVars bind_block(Binder& bind, const std::string& prefix, bool self_attention);
void init_block(ParamStore& store, const std::string& prefix, std::size_t width, double mlp_ratio,
                Rng& rng, bool self_attention);
std::size_t block_param_count(std::size_t width, double mlp_ratio, bool self_attention);

Var linear(const Var& x, const LinearVars& w);
Var norm(const Var& x, const NormVars& w, double eps = 1e-6);

struct AttentionResult {
  Var context;  // [Lq, C], heads concatenated, before the output projection
  Var weights;  // [heads, Lq, Lk]
};

// Scaled dot-product attention over already-projected Q [Lq,C], K/V [Lk,C].
AttentionResult multi_head_attention(const Var& q, const Var& k, const Var& v, std::size_t heads);

// Full attention path: project, attend, output projection.
Var attend(const Var& q_normed, const Var& kv_normed, const BlockVars& w, std::size_t heads);

// x + fc2(gelu(fc1(norm(x))))
Var mlp_residual(const Var& x, const BlockVars& w);

}  // namespace segvit

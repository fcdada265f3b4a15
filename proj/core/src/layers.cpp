#include "segvit/layers.hpp"

#include <cmath>

#include "segvit/errors.hpp"
#include "segvit/ops.hpp"

namespace segvit {

LinearVars bind_linear(Binder& bind, const std::string& prefix, bool bias) {
  LinearVars w;
  w.weight = bind(prefix + ".weight");
  if (bias) w.bias = bind(prefix + ".bias");
  return w;
}

NormVars bind_norm(Binder& bind, const std::string& prefix) {
  return {bind(prefix + ".gain"), bind(prefix + ".bias")};
}

BlockVars bind_block(Binder& bind, const std::string& prefix, bool self_attention) {
  BlockVars w;
  w.norm_q = bind_norm(bind, prefix + ".norm_q");
  w.norm_kv = self_attention ? w.norm_q : bind_norm(bind, prefix + ".norm_kv");
  w.q = bind_linear(bind, prefix + ".q");
  w.k = bind_linear(bind, prefix + ".k");
  w.v = bind_linear(bind, prefix + ".v");
  w.out = bind_linear(bind, prefix + ".out");
  w.norm_mlp = bind_norm(bind, prefix + ".norm_mlp");
  w.fc1 = bind_linear(bind, prefix + ".fc1");
  w.fc2 = bind_linear(bind, prefix + ".fc2");
  return w;
}

void init_block(ParamStore& store, const std::string& prefix, std::size_t width, double mlp_ratio,
                Rng& rng, bool self_attention) {
  const auto hidden = static_cast<std::size_t>(std::lround(mlp_ratio * static_cast<double>(width)));
  init_norm(store, prefix + ".norm_q", width);
  if (!self_attention) init_norm(store, prefix + ".norm_kv", width);
  init_linear(store, prefix + ".q", width, width, rng);
  init_linear(store, prefix + ".k", width, width, rng);
  init_linear(store, prefix + ".v", width, width, rng);
  init_linear(store, prefix + ".out", width, width, rng);
  init_norm(store, prefix + ".norm_mlp", width);
  init_linear(store, prefix + ".fc1", width, hidden, rng);
  init_linear(store, prefix + ".fc2", hidden, width, rng);
}

std::size_t block_param_count(std::size_t width, double mlp_ratio, bool self_attention) {
  const auto hidden = static_cast<std::size_t>(std::lround(mlp_ratio * static_cast<double>(width)));
  const std::size_t norms = (self_attention ? 2 : 3) * 2 * width;
  const std::size_t attn = 4 * (width * width + width);
  const std::size_t mlp = width * hidden + hidden + hidden * width + width;
  return norms + attn + mlp;
}

Var linear(const Var& x, const LinearVars& w) {
  Var y = matmul(x, w.weight);
  return w.bias.valid() ? add(y, w.bias) : y;
}

Var norm(const Var& x, const NormVars& w, double eps) {
  Var y = layer_norm(x, x.shape().size() - 1, eps);
  return add(mul(y, w.gain), w.bias);
}

AttentionResult multi_head_attention(const Var& q, const Var& k, const Var& v, std::size_t heads) {
  if (q.shape().size() != 2 || k.shape().size() != 2 || v.shape() != k.shape() ||
      q.shape()[1] != k.shape()[1]) {
    throw ContractViolation("attention: incompatible shapes q" + shape_str(q.shape()) + " k" +
                            shape_str(k.shape()) + " v" + shape_str(v.shape()));
  }
  const std::size_t lq = q.shape()[0];
  const std::size_t lk = k.shape()[0];
  const std::size_t c = q.shape()[1];
  if (heads == 0 || c % heads != 0) {
    throw ContractViolation("attention: width " + std::to_string(c) + " not divisible by " +
                            std::to_string(heads) + " heads");
  }
  const std::size_t d = c / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
  if (heads == 1) {
    Var w = softmax(scale(matmul(q, k, true), inv_sqrt), 1);
    return {matmul(w, v), reshape(w, {1, lq, lk})};
  }
  auto split = [&](const Var& x, std::size_t len) {
    return transpose(reshape(x, {len, heads, d}), {1, 0, 2});
  };
  Var qh = split(q, lq);
  Var kh = split(k, lk);
  Var vh = split(v, lk);
  Var w = softmax(scale(matmul(qh, kh, true), inv_sqrt), 2);
  Var ctx = matmul(w, vh);
  return {reshape(transpose(ctx, {1, 0, 2}), {lq, c}), w};
}

Var attend(const Var& q_normed, const Var& kv_normed, const BlockVars& w, std::size_t heads) {
  Var q = linear(q_normed, w.q);
  Var k = linear(kv_normed, w.k);
  Var v = linear(kv_normed, w.v);
  return linear(multi_head_attention(q, k, v, heads).context, w.out);
}

Var mlp_residual(const Var& x, const BlockVars& w) {
  return add(x, linear(gelu(linear(norm(x, w.norm_mlp), w.fc1)), w.fc2));
}

}  // namespace segvit

#include "segvit/shrunk.hpp"

#include <algorithm>
#include <cmath>

#include "segvit/errors.hpp"
#include "segvit/ops.hpp"

namespace segvit {

std::string step_kind_name(StepKind kind) {
  switch (kind) {
    case StepKind::kLayer:
      return "layer";
    case StepKind::kQd:
      return "qd";
    case StepKind::kQu:
      return "qu";
  }
  return "?";
}

std::string schedule_str(const TokenSchedule& schedule) {
  std::string out;
  for (const ScheduleStep& s : schedule) {
    if (!out.empty()) out += ' ';
    out += step_kind_name(s.kind) + "(" + std::to_string(s.queries) + "x" +
           std::to_string(s.keys) + ")";
  }
  return out;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kSingle:
      return "single";
    case Variant::kShrunk:
      return "shrunk";
    case Variant::kShrunkPP:
      return "shrunk_pp";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "single") return Variant::kSingle;
  if (name == "shrunk") return Variant::kShrunk;
  if (name == "shrunk_pp" || name == "shrunkpp" || name == "shrunk++") return Variant::kShrunkPP;
  throw ContractViolation("unknown variant '" + name + "'");
}

void ShrunkConfig::validate(const EncoderConfig& enc) const {
  if (variant == Variant::kSingle) return;
  if (qd_stride < 1 || qd_stride > 3) {
    throw ContractViolation("shrunk: stride must be 1, 2 or 3, got " + std::to_string(qd_stride));
  }
  const GridSize g = enc.grid();
  if (g.h % qd_stride != 0 || g.w % qd_stride != 0) {
    throw ContractViolation("shrunk: grid " + std::to_string(g.h) + "x" + std::to_string(g.w) +
                            " not divisible by stride " + std::to_string(qd_stride));
  }
  if (variant == Variant::kShrunk) {
    if (qd_layer <= 1 || qd_layer >= enc.depth) {
      throw ContractViolation("shrunk: qd_layer " + std::to_string(qd_layer) + " outside (1, " +
                              std::to_string(enc.depth) + ")");
    }
  } else {
    if (qd_layer != 0) throw ContractViolation("shrunk_pp: qd_layer must be 0");
    if (!(edge_threshold > 0.0 && edge_threshold < 1.0)) {
      throw ContractViolation("shrunk_pp: edge threshold must lie in (0, 1)");
    }
  }
}

TokenSelection nearest_anchor_indices(GridSize grid, std::size_t stride) {
  if (stride == 0 || grid.h % stride != 0 || grid.w % stride != 0) {
    throw ContractViolation("nearest_anchor_indices: grid " + std::to_string(grid.h) + "x" +
                            std::to_string(grid.w) + " not divisible by stride " +
                            std::to_string(stride));
  }
  TokenSelection sel;
  sel.source_grid = grid;
  sel.target_grid = GridSize{grid.h / stride, grid.w / stride};
  for (std::size_t y = 0; y < grid.h; y += stride) {
    for (std::size_t x = 0; x < grid.w; x += stride) sel.retained.push_back(y * grid.w + x);
  }
  return sel;
}

TokenSelection eqd_select(GridSize grid, std::size_t stride, const Tensor& edge_mask) {
  if (edge_mask.numel() != grid.count()) {
    throw ContractViolation("eqd_select: edge mask of " + std::to_string(edge_mask.numel()) +
                            " entries for " + std::to_string(grid.count()) + " tokens");
  }
  TokenSelection anchors = nearest_anchor_indices(grid, stride);
  std::vector<bool> keep(grid.count(), false);
  for (std::size_t i : anchors.retained) keep[i] = true;
  for (std::size_t i = 0; i < grid.count(); ++i) {
    if (edge_mask[i] != 0.0) keep[i] = true;
  }
  TokenSelection sel;
  sel.source_grid = grid;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) sel.retained.push_back(i);
  }
  return sel;
}

TokenGrid qd_layer(const TokenGrid& tg, const TokenSelection& sel, const BlockVars& w,
                   std::size_t heads) {
  if (!(sel.source_grid == tg.grid) || tg.length() != tg.grid.count()) {
    throw ContractViolation("qd_layer: selection made for a different grid");
  }
  for (std::size_t i : sel.retained) {
    if (i >= tg.length()) throw ContractViolation("qd_layer: retained index out of range");
  }
  Var xn = norm(tg.tokens, w.norm_q);
  Var xq = gather_rows(tg.tokens, sel.retained);
  Var qn = gather_rows(xn, sel.retained);
  Var y = add(xq, attend(qn, xn, w, heads));
  GridSize out_grid = sel.target_grid ? *sel.target_grid : GridSize{1, sel.size()};
  return {mlp_residual(y, w), out_grid};
}

TokenGrid qu_layer(const TokenGrid& queries, const TokenGrid& kv, const BlockVars& w,
                   std::size_t heads) {
  if (queries.width() != kv.width()) {
    throw ContractViolation("qu_layer: query width " + std::to_string(queries.width()) +
                            " vs kv width " + std::to_string(kv.width()));
  }
  Var qn = norm(queries.tokens, w.norm_q);
  Var kvn = norm(kv.tokens, w.norm_kv);
  Var y = add(queries.tokens, attend(qn, kvn, w, heads));
  return {mlp_residual(y, w), queries.grid};
}

void init_edge_head(ParamStore& store, const std::string& prefix, std::size_t in_width,
                    std::size_t width, Rng& rng) {
  if (width < 2) throw ContractViolation("edge head: width must be at least 2");
  init_linear(store, prefix + ".fc1", in_width, width, rng);
  init_linear(store, prefix + ".fc2", width, width / 2, rng);
  init_linear(store, prefix + ".fc3", width / 2, 2, rng);
}

EdgeHeadVars bind_edge_head(Binder& bind, const std::string& prefix) {
  return {bind_linear(bind, prefix + ".fc1"), bind_linear(bind, prefix + ".fc2"),
          bind_linear(bind, prefix + ".fc3")};
}

Var edge_head_forward(const Var& tokens, const EdgeHeadVars& head) {
  if (tokens.shape().size() != 2 || tokens.shape()[1] != head.fc1.weight.shape()[0]) {
    throw ContractViolation("edge_head_forward: tokens " + shape_str(tokens.shape()) +
                            " vs head input " + shape_str(head.fc1.weight.shape()));
  }
  Var h = gelu(linear(tokens, head.fc1));
  h = gelu(linear(h, head.fc2));
  return softmax(linear(h, head.fc3), 1);
}

Tensor edge_mask_from_scores(const Tensor& edge_probs, double tau) {
  const Shape& s = edge_probs.shape();
  const bool two_col = s.size() == 2 && s[1] == 2;
  if (!two_col && s.size() != 1) {
    throw ContractViolation("edge_mask_from_scores: expected [L, 2] or [L], got " + shape_str(s));
  }
  const std::size_t n = s[0];
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    const double p = two_col ? edge_probs[i * 2 + 1] : edge_probs[i];
    out[i] = p >= tau ? 1.0 : 0.0;
  }
  return out;
}

Tensor gt_edge_mask(const LabelMap& labels, std::size_t p) {
  if (p == 0 || labels.height % p != 0 || labels.width % p != 0) {
    throw ContractViolation("gt_edge_mask: " + std::to_string(labels.height) + "x" +
                            std::to_string(labels.width) + " not divisible by patch " +
                            std::to_string(p));
  }
  const std::size_t h = labels.height;
  const std::size_t w = labels.width;
  const std::size_t gw = w / p;
  Tensor out({(h / p) * gw});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint8_t v = labels.at(y, x);
      const bool edge = (y > 0 && labels.at(y - 1, x) != v) ||
                        (y + 1 < h && labels.at(y + 1, x) != v) ||
                        (x > 0 && labels.at(y, x - 1) != v) ||
                        (x + 1 < w && labels.at(y, x + 1) != v);
      if (edge) out[(y / p) * gw + x / p] = 1.0;
    }
  }
  return out;
}

Var edge_loss(const Var& edge_probs, const Tensor& gt_mask) {
  const Shape& s = edge_probs.shape();
  if (s.size() != 2 || s[1] != 2 || gt_mask.numel() != s[0]) {
    throw ContractViolation("edge_loss: probs " + shape_str(s) + " vs target of " +
                            std::to_string(gt_mask.numel()));
  }
  Tape& tape = edge_probs.tape();
  const std::size_t n = s[0];
  Var p = clamp(reshape(slice(edge_probs, 1, 1, 2), {n}), 1e-12, 1.0 - 1e-12);
  Tensor g({n});
  Tensor ng({n});
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = gt_mask[i];
    ng[i] = 1.0 - gt_mask[i];
  }
  Var pos = mul(tape.constant(std::move(g)), log(p));
  Var neg = mul(tape.constant(std::move(ng)), log(add_scalar(scale(p, -1.0), 1.0)));
  return scale(mean_all(add(pos, neg)), -1.0);
}

namespace {

std::string restore_name(const std::string& prefix, std::size_t tap) {
  return prefix + ".restore" + std::to_string(tap);
}

Tensor query_init(const ParamStore& store, const EncoderConfig& enc, Rng& rng) {
  Tensor q = trunc_normal({enc.tokens(), enc.width}, rng);
  const Tensor& pos = store.at("encoder.pos").value;
  if (pos.shape() != q.shape()) throw ContractViolation("shrunk: encoder must be initialized first");
  for (std::size_t i = 0; i < q.numel(); ++i) q[i] += pos[i];
  return q;
}

bool stride_active(const ShrunkConfig& cfg) { return cfg.qd_stride > 1; }

}  // namespace

void init_shrunk(ParamStore& store, const EncoderConfig& enc, const ShrunkConfig& cfg, Rng& rng) {
  cfg.validate(enc);
  if (cfg.variant == Variant::kShrunk) {
    store.add("shrunk.store_queries", query_init(store, enc, rng));
    init_block(store, "shrunk.store", enc.width, enc.mlp_ratio, rng, false);
    for (std::size_t tap : enc.tap_layers) {
      if (tap > cfg.qd_layer) {
        init_block(store, restore_name("shrunk", tap), enc.width, enc.mlp_ratio, rng, false);
      }
    }
  } else if (cfg.variant == Variant::kShrunkPP) {
    init_edge_head(store, "edge", enc.width, enc.width, rng);
    store.add("shrunkpp.queries", query_init(store, enc, rng));
    for (std::size_t tap : enc.tap_layers) {
      init_block(store, restore_name("shrunkpp", tap), enc.width, enc.mlp_ratio, rng, false);
    }
  }
}

ShrunkVars bind_shrunk(Binder& bind, const EncoderConfig& enc, const ShrunkConfig& cfg) {
  ShrunkVars w;
  w.restore.resize(enc.tap_layers.size());
  w.restored.assign(enc.tap_layers.size(), false);
  if (cfg.variant == Variant::kShrunk) {
    w.store_queries = bind("shrunk.store_queries");
    w.store_qu = bind_block(bind, "shrunk.store", false);
    for (std::size_t i = 0; i < enc.tap_layers.size(); ++i) {
      if (enc.tap_layers[i] > cfg.qd_layer) {
        w.restore[i] = bind_block(bind, restore_name("shrunk", enc.tap_layers[i]), false);
        w.restored[i] = true;
      }
    }
  } else if (cfg.variant == Variant::kShrunkPP) {
    w.edge = bind_edge_head(bind, "edge");
    w.full_queries = bind("shrunkpp.queries");
    for (std::size_t i = 0; i < enc.tap_layers.size(); ++i) {
      w.restore[i] = bind_block(bind, restore_name("shrunkpp", enc.tap_layers[i]), false);
      w.restored[i] = true;
    }
  }
  return w;
}

std::size_t shrunk_param_count(const EncoderConfig& enc, const ShrunkConfig& cfg) {
  const std::size_t c = enc.width;
  const std::size_t qu = block_param_count(c, enc.mlp_ratio, false);
  if (cfg.variant == Variant::kShrunk) {
    std::size_t restored = 0;
    for (std::size_t tap : enc.tap_layers) restored += tap > cfg.qd_layer ? 1 : 0;
    return enc.tokens() * c + qu * (1 + restored);
  }
  if (cfg.variant == Variant::kShrunkPP) {
    const std::size_t edge = (c * c + c) + (c * (c / 2) + c / 2) + ((c / 2) * 2 + 2);
    return edge + enc.tokens() * c + qu * enc.tap_layers.size();
  }
  return 0;
}

namespace {

void check_bound(const EncoderConfig& enc, const EncoderVars& ew) {
  enc.validate();
  if (ew.layers.size() != enc.depth) {
    throw ContractViolation("encoder: bound " + std::to_string(ew.layers.size()) +
                            " layers for depth " + std::to_string(enc.depth));
  }
}

}  // namespace

ShrunkResult single_forward(Tape& tape, const Tensor& image, const EncoderConfig& enc,
                            const EncoderVars& ew) {
  check_bound(enc, ew);
  ShrunkResult r;
  TokenGrid x = embed_image(tape, image, enc, ew);
  r.selection = nearest_anchor_indices(enc.grid(), 1);
  std::size_t next_tap = 0;
  for (std::size_t i = 1; i <= enc.depth; ++i) {
    x = encoder_layer(x, ew.layers[i - 1], enc.heads);
    r.schedule.push_back({StepKind::kLayer, x.length(), x.length()});
    if (next_tap < enc.tap_layers.size() && enc.tap_layers[next_tap] == i) {
      r.taps.push_back(x);
      ++next_tap;
    }
  }
  return r;
}

ShrunkResult shrunk_forward(Tape& tape, const Tensor& image, const EncoderConfig& enc,
                            const ShrunkConfig& cfg, const EncoderVars& ew, const ShrunkVars& sw) {
  if (cfg.variant != Variant::kShrunk) throw ContractViolation("shrunk_forward: variant is not shrunk");
  cfg.validate(enc);
  check_bound(enc, ew);
  const bool active = stride_active(cfg);
  ShrunkResult r;
  r.selection = nearest_anchor_indices(enc.grid(), cfg.qd_stride);
  TokenGrid x = embed_image(tape, image, enc, ew);
  const std::size_t full = x.length();
  TokenGrid stored;
  std::size_t next_tap = 0;
  for (std::size_t i = 1; i <= enc.depth; ++i) {
    const std::size_t keys = x.length();
    if (i == cfg.qd_layer + 1) {
      if (active && cfg.high_res_store) {
        stored = qu_layer({sw.store_queries, enc.grid()}, x, sw.store_qu, enc.heads);
        r.schedule.push_back({StepKind::kQu, full, keys});
      }
      x = qd_layer(x, r.selection, ew.layers[i - 1], enc.heads);
      r.schedule.push_back({StepKind::kQd, x.length(), keys});
    } else {
      x = encoder_layer(x, ew.layers[i - 1], enc.heads);
      r.schedule.push_back({StepKind::kLayer, x.length(), keys});
    }
    if (next_tap < enc.tap_layers.size() && enc.tap_layers[next_tap] == i) {
      if (i > cfg.qd_layer && active) {
        const TokenGrid queries = cfg.high_res_store ? stored
                                                     : TokenGrid{sw.store_queries, enc.grid()};
        r.taps.push_back(qu_layer(queries, x, sw.restore[next_tap], enc.heads));
        r.schedule.push_back({StepKind::kQu, full, x.length()});
      } else {
        r.taps.push_back(x);
      }
      ++next_tap;
    }
  }
  return r;
}

ShrunkResult shrunkpp_forward(Tape& tape, const Tensor& image, const EncoderConfig& enc,
                              const ShrunkConfig& cfg, const EncoderVars& ew, const ShrunkVars& sw,
                              const Tensor* edge_mask_override) {
  if (cfg.variant != Variant::kShrunkPP) {
    throw ContractViolation("shrunkpp_forward: variant is not shrunk_pp");
  }
  cfg.validate(enc);
  check_bound(enc, ew);
  ShrunkResult r;
  TokenGrid patches = patchify(tape, image, enc, ew.patch);
  r.edge_probs = edge_head_forward(patches.tokens, sw.edge);
  r.edge_mask = edge_mask_override ? *edge_mask_override
                                   : edge_mask_from_scores(r.edge_probs.value(), cfg.edge_threshold);
  r.selection = eqd_select(enc.grid(), cfg.qd_stride, r.edge_mask);
  const std::size_t full = enc.tokens();
  TokenGrid x = add_positional(patches, ew.pos);
  x = {gather_rows(x.tokens, r.selection.retained), GridSize{1, r.selection.size()}};
  TokenGrid queries{sw.full_queries, enc.grid()};
  std::size_t next_tap = 0;
  for (std::size_t i = 1; i <= enc.depth; ++i) {
    x = encoder_layer(x, ew.layers[i - 1], enc.heads);
    r.schedule.push_back({StepKind::kLayer, x.length(), x.length()});
    if (next_tap < enc.tap_layers.size() && enc.tap_layers[next_tap] == i) {
      r.taps.push_back(qu_layer(queries, x, sw.restore[next_tap], enc.heads));
      r.schedule.push_back({StepKind::kQu, full, x.length()});
      ++next_tap;
    }
  }
  return r;
}

}  // namespace segvit

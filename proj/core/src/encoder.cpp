#include "segvit/encoder.hpp"

#include <algorithm>

#include "segvit/errors.hpp"
#include "segvit/ops.hpp"

namespace segvit {

void EncoderConfig::validate() const {
  if (patch_size == 0 || width == 0 || heads == 0) {
    throw ContractViolation("encoder: patch size, width and heads must be positive");
  }
  if (image_height == 0 || image_width == 0 || image_height % patch_size != 0 ||
      image_width % patch_size != 0) {
    throw ContractViolation("encoder: image " + std::to_string(image_height) + "x" +
                            std::to_string(image_width) + " not divisible by patch " +
                            std::to_string(patch_size));
  }
  if (width % heads != 0) {
    throw ContractViolation("encoder: width " + std::to_string(width) +
                            " not divisible by heads " + std::to_string(heads));
  }
  if (!(mlp_ratio > 0.0)) throw ContractViolation("encoder: mlp_ratio must be positive");
  if (tap_layers.empty()) throw ContractViolation("encoder: tap_layers is empty");
  for (std::size_t i = 0; i < tap_layers.size(); ++i) {
    if (tap_layers[i] < 1 || tap_layers[i] > depth) {
      throw ContractViolation("encoder: tap index " + std::to_string(tap_layers[i]) +
                              " out of [1, " + std::to_string(depth) + "]");
    }
    if (i > 0 && tap_layers[i] <= tap_layers[i - 1]) {
      throw ContractViolation("encoder: tap_layers must be strictly increasing");
    }
  }
  if (tap_layers.back() != depth) {
    throw ContractViolation("encoder: last tap must be the final layer");
  }
}

void init_encoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng, const std::string& prefix) {
  cfg.validate();
  init_linear(store, prefix + ".patch", cfg.patch_dim(), cfg.width, rng);
  store.add(prefix + ".pos", trunc_normal({cfg.tokens(), cfg.width}, rng));
  for (std::size_t i = 1; i <= cfg.depth; ++i) {
    init_block(store, prefix + ".layer" + std::to_string(i), cfg.width, cfg.mlp_ratio, rng, true);
  }
}

EncoderVars bind_encoder(Binder& bind, const EncoderConfig& cfg, const std::string& prefix) {
  EncoderVars w;
  w.patch = bind_linear(bind, prefix + ".patch");
  w.pos = bind(prefix + ".pos");
  for (std::size_t i = 1; i <= cfg.depth; ++i) {
    w.layers.push_back(bind_block(bind, prefix + ".layer" + std::to_string(i), true));
  }
  return w;
}

std::size_t encoder_param_count(const EncoderConfig& cfg) {
  return cfg.patch_dim() * cfg.width + cfg.width + cfg.tokens() * cfg.width +
         cfg.depth * block_param_count(cfg.width, cfg.mlp_ratio, true);
}

Tensor extract_patches(const Tensor& image, std::size_t p) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[2] != 3) {
    throw ContractViolation("patchify: image must be [H, W, 3], got " + shape_str(s));
  }
  if (p == 0 || s[0] % p != 0 || s[1] % p != 0) {
    throw ContractViolation("patchify: image " + shape_str(s) + " not divisible by patch " +
                            std::to_string(p));
  }
  const std::size_t gh = s[0] / p;
  const std::size_t gw = s[1] / p;
  const std::size_t dim = p * p * 3;
  Tensor out({gh * gw, dim});
  for (std::size_t ty = 0; ty < gh; ++ty) {
    for (std::size_t tx = 0; tx < gw; ++tx) {
      double* row = out.data().data() + (ty * gw + tx) * dim;
      for (std::size_t y = 0; y < p; ++y) {
        const double* src = image.data().data() + ((ty * p + y) * s[1] + tx * p) * 3;
        std::copy_n(src, p * 3, row + y * p * 3);
      }
    }
  }
  return out;
}

TokenGrid patchify(Tape& tape, const Tensor& image, const EncoderConfig& cfg,
                   const LinearVars& patch) {
  if (image.shape() != Shape{cfg.image_height, cfg.image_width, 3}) {
    throw ContractViolation("patchify: image " + shape_str(image.shape()) +
                            " does not match config " + std::to_string(cfg.image_height) + "x" +
                            std::to_string(cfg.image_width));
  }
  Var patches = tape.constant(extract_patches(image, cfg.patch_size));
  return {linear(patches, patch), cfg.grid()};
}

TokenGrid add_positional(const TokenGrid& tg, const Var& pos) {
  if (pos.shape() != tg.tokens.shape()) {
    throw ContractViolation("add_positional: position table " + shape_str(pos.shape()) +
                            " vs tokens " + shape_str(tg.tokens.shape()));
  }
  return {add(tg.tokens, pos), tg.grid};
}

TokenGrid encoder_layer(const TokenGrid& tg, const BlockVars& w, std::size_t heads) {
  Var x = tg.tokens;
  Var xn = norm(x, w.norm_q);
  Var y = add(x, attend(xn, xn, w, heads));
  return {mlp_residual(y, w), tg.grid};
}

TokenGrid embed_image(Tape& tape, const Tensor& image, const EncoderConfig& cfg,
                      const EncoderVars& w) {
  return add_positional(patchify(tape, image, cfg, w.patch), w.pos);
}

std::vector<TokenGrid> run_encoder_tapped(Tape& tape, const Tensor& image,
                                          const EncoderConfig& cfg, const EncoderVars& w) {
  cfg.validate();
  if (w.layers.size() != cfg.depth) {
    throw ContractViolation("encoder: bound " + std::to_string(w.layers.size()) +
                            " layers for depth " + std::to_string(cfg.depth));
  }
  TokenGrid x = embed_image(tape, image, cfg, w);
  std::vector<TokenGrid> taps;
  std::size_t next_tap = 0;
  for (std::size_t i = 1; i <= cfg.depth; ++i) {
    x = encoder_layer(x, w.layers[i - 1], cfg.heads);
    if (next_tap < cfg.tap_layers.size() && cfg.tap_layers[next_tap] == i) {
      taps.push_back(x);
      ++next_tap;
    }
  }
  return taps;
}

}  // namespace segvit

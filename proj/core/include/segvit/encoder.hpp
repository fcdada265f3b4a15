#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "segvit/layers.hpp"
#include "segvit/params.hpp"
#include "segvit/tape.hpp"
#include "segvit/tensor.hpp"

namespace segvit {

struct GridSize {
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t count() const noexcept { return h * w; }
  friend bool operator==(const GridSize&, const GridSize&) = default;
};

struct EncoderConfig {
  std::size_t patch_size = 8;
  std::size_t width = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  std::vector<std::size_t> tap_layers{2, 3, 4};

  // Throws ContractViolation when an invariant does not hold.
  void validate() const;
  GridSize grid() const { return {image_height / patch_size, image_width / patch_size}; }
  std::size_t tokens() const { return grid().count(); }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }
};

/// Token sequence [L, C] laid out row-major on an (h, w) grid.
struct TokenGrid {
  Var tokens;
  GridSize grid;

  std::size_t length() const { return tokens.shape()[0]; }
  std::size_t width() const { return tokens.shape()[1]; }
};

struct EncoderVars {
  LinearVars patch;
  Var pos;  // [L, C]
  std::vector<BlockVars> layers;
};

void init_encoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng,
                  const std::string& prefix = "encoder");
EncoderVars bind_encoder(Binder& bind, const EncoderConfig& cfg,
                         const std::string& prefix = "encoder");
std::size_t encoder_param_count(const EncoderConfig& cfg);

// image [H, W, 3] -> [L, P*P*3]; patch-major, then (row, col, channel).
Tensor extract_patches(const Tensor& image, std::size_t patch_size);

TokenGrid patchify(Tape& tape, const Tensor& image, const EncoderConfig& cfg,
                   const LinearVars& patch);
TokenGrid add_positional(const TokenGrid& tg, const Var& pos);
// Pre-norm block: x + attn(norm(x)), then + mlp(norm(.)).
TokenGrid encoder_layer(const TokenGrid& tg, const BlockVars& w, std::size_t heads);

// Embedded tokens F_0 (patch projection plus positions).
TokenGrid embed_image(Tape& tape, const Tensor& image, const EncoderConfig& cfg,
                      const EncoderVars& w);

// F_i for every i in cfg.tap_layers, in ascending layer order.
std::vector<TokenGrid> run_encoder_tapped(Tape& tape, const Tensor& image,
                                          const EncoderConfig& cfg, const EncoderVars& w);

}  // namespace segvit

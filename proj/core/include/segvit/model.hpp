#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "segvit/atm.hpp"
#include "segvit/encoder.hpp"
#include "segvit/labels.hpp"
#include "segvit/losses.hpp"
#include "segvit/shrunk.hpp"

namespace segvit {

enum class HeadKind { kAtm, kLinear };

std::string head_name(HeadKind h);
HeadKind parse_head(const std::string& name);

struct ModelConfig {
  EncoderConfig encoder;
  ShrunkConfig shrunk;
  HeadKind head = HeadKind::kAtm;
  std::size_t num_classes = 5;
  LossWeights loss;

  void validate() const;
};

void init_model(ParamStore& store, const ModelConfig& cfg, Rng& rng);
std::size_t model_param_count(const ModelConfig& cfg);

struct ModelOutput {
  SegOutput seg;  // linear head: masks and seg_scores hold per-pixel class probabilities
  CascadeOutput cascade;                 // ATM head only
  std::vector<Var> stage_class_probs;    // ATM head only, one per stage
  Var logits;                            // linear head only, [N, H, W]
  ShrunkResult encoder;
};

ModelOutput model_forward(Binder& bind, const Tensor& image, const ModelConfig& cfg);

// Combined-mask term at full resolution, one auxiliary term per stage at
// token resolution, and the edge term for Shrunk++.
LossBreakdown model_loss(const ModelOutput& out, const LabelMap& gt, const ModelConfig& cfg);

// Inference without gradients.
LabelMap model_predict(ParamStore& store, const Tensor& image, const ModelConfig& cfg);

}  // namespace segvit

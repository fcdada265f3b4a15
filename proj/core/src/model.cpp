#include "segvit/model.hpp"

#include "segvit/errors.hpp"
#include "segvit/ops.hpp"

namespace segvit {

namespace {

constexpr const char* kDecoder = "decoder";
constexpr const char* kLinearHead = "head.linear";

}  // namespace

std::string head_name(HeadKind h) { return h == HeadKind::kAtm ? "atm" : "linear"; }

HeadKind parse_head(const std::string& name) {
  if (name == "atm") return HeadKind::kAtm;
  if (name == "linear") return HeadKind::kLinear;
  throw ContractViolation("unknown head '" + name + "'");
}

void ModelConfig::validate() const {
  encoder.validate();
  shrunk.validate(encoder);
  loss.validate();
  if (num_classes < 1 || num_classes > 255) {
    throw ContractViolation("model: num_classes must lie in [1, 255]");
  }
}

void init_model(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  init_encoder(store, cfg.encoder, rng);
  init_shrunk(store, cfg.encoder, cfg.shrunk, rng);
  if (cfg.head == HeadKind::kAtm) {
    init_decoder(store, kDecoder, cfg.num_classes, cfg.encoder.width, cfg.encoder.tap_layers.size(),
                 cfg.encoder.mlp_ratio, rng);
  } else {
    init_linear(store, kLinearHead, cfg.encoder.width, cfg.num_classes, rng);
  }
}

std::size_t model_param_count(const ModelConfig& cfg) {
  std::size_t n = encoder_param_count(cfg.encoder) + shrunk_param_count(cfg.encoder, cfg.shrunk);
  if (cfg.head == HeadKind::kAtm) {
    n += decoder_param_count(cfg.num_classes, cfg.encoder.width, cfg.encoder.tap_layers.size(),
                             cfg.encoder.mlp_ratio);
  } else {
    n += cfg.encoder.width * cfg.num_classes + cfg.num_classes;
  }
  return n;
}

ModelOutput model_forward(Binder& bind, const Tensor& image, const ModelConfig& cfg) {
  cfg.validate();
  Tape& tape = bind.tape();
  const EncoderConfig& enc = cfg.encoder;
  EncoderVars ew = bind_encoder(bind, enc);
  ModelOutput out;
  switch (cfg.shrunk.variant) {
    case Variant::kSingle:
      out.encoder = single_forward(tape, image, enc, ew);
      break;
    case Variant::kShrunk:
      out.encoder = shrunk_forward(tape, image, enc, cfg.shrunk, ew, bind_shrunk(bind, enc, cfg.shrunk));
      break;
    case Variant::kShrunkPP:
      out.encoder =
          shrunkpp_forward(tape, image, enc, cfg.shrunk, ew, bind_shrunk(bind, enc, cfg.shrunk));
      break;
  }
  if (cfg.head == HeadKind::kAtm) {
    DecoderVars dw = bind_decoder(bind, kDecoder, enc.tap_layers.size());
    out.cascade = cascade_decode(dw.class_tokens, out.encoder.taps, dw.stages, enc.heads);
    for (const AtmStageOutput& s : out.cascade.stages) {
      out.stage_class_probs.push_back(classify_tokens(s.tokens, dw.classifier));
    }
    out.seg = assemble_segmentation(out.cascade.combined_mask, out.cascade.grid,
                                    out.stage_class_probs.back(), enc.image_height,
                                    enc.image_width);
  } else {
    const TokenGrid& last = out.encoder.taps.back();
    const std::size_t n = cfg.num_classes;
    Var tok = linear(last.tokens, bind_linear(bind, kLinearHead));
    Var planes = reshape(transpose(tok, {1, 0}), {n, last.grid.h, last.grid.w});
    out.logits = bilinear_upsample2d(planes, enc.image_height, enc.image_width);
    Var probs = softmax(out.logits, 0);
    out.seg.masks = probs;
    out.seg.seg_scores = probs;
  }
  return out;
}

LossBreakdown model_loss(const ModelOutput& out, const LabelMap& gt, const ModelConfig& cfg) {
  const std::size_t n = cfg.num_classes;
  Tensor onehot = one_hot_masks(gt, n);
  Tensor valid = valid_pixels(gt);
  if (cfg.head == HeadKind::kLinear) {
    Tape& tape = out.logits.tape();
    double count = 0.0;
    for (double v : valid.data()) count += v;
    LossBreakdown b;
    if (count == 0.0) {
      b.total = tape.constant(Tensor::scalar(0.0));
      return b;
    }
    Var logp = log(clamp(out.seg.seg_scores, 1e-12, 1.0));
    b.total = scale(sum_all(mul(logp, tape.constant(std::move(onehot)))), -1.0 / count);
    b.cls = b.total.value().item();
    return b;
  }
  std::vector<MaskTarget> terms;
  Tensor presence = presence_targets(gt, n);
  terms.push_back({out.seg.masks, out.seg.class_probs, onehot, valid, presence, 1.0});
  Tensor token_valid;
  Tensor token_gt = pool_to_tokens(onehot, valid, cfg.encoder.patch_size, &token_valid);
  for (std::size_t i = 0; i < out.cascade.stages.size(); ++i) {
    terms.push_back({out.cascade.stages[i].mask, out.stage_class_probs[i], token_gt, token_valid,
                     presence, cfg.loss.aux});
  }
  Var edge;
  if (cfg.shrunk.variant == Variant::kShrunkPP) {
    edge = edge_loss(out.encoder.edge_probs, gt_edge_mask(gt, cfg.encoder.patch_size));
  }
  return total_loss(terms, cfg.loss, edge);
}

LabelMap model_predict(ParamStore& store, const Tensor& image, const ModelConfig& cfg) {
  Tape tape;
  Binder bind(tape, store, false);
  ModelOutput out = model_forward(bind, image, cfg);
  return predict_labels(out.seg.seg_scores.value());
}

}  // namespace segvit

// Acceptance suite: one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "grad_cases.hpp"
#include "model_grad.hpp"
#include "schedule_check.hpp"
#include "segvit/atm.hpp"
#include "segvit/checkpoint.hpp"
#include "segvit/config.hpp"
#include "segvit/cost_model.hpp"
#include "segvit/dataset.hpp"
#include "segvit/losses.hpp"
#include "segvit/netpbm.hpp"
#include "segvit/ops.hpp"
#include "segvit/pipeline.hpp"
#include "segvit/shrunk.hpp"

namespace fs = std::filesystem;
using namespace segvit;

namespace {

// Pinned tolerances and recipes.
constexpr double kGradTol = 1e-3;
constexpr double kGradStep = 1e-4;
constexpr std::uint64_t kGradSeeds = 10;
constexpr double kGradBudgetSec = 300;
constexpr std::size_t kDecodeInstances = 100;
constexpr double kCostBand = 0.15;
constexpr double kLargeRatio = 0.484, kLargeRatioTol = 0.07;
constexpr double kCostBudgetSec = 1.0;
constexpr double kClDropPoints = 2.0;
constexpr double kClBudgetSec = 20 * 60;
constexpr std::size_t kClStepsPerTask = 1500;
constexpr double kSingleBar = 0.70, kShrunkBar = 0.65;
constexpr std::size_t kToySteps = 5000;
constexpr double kToyBudgetSec = 30 * 60;
constexpr std::size_t kAblationSteps = 2000;
constexpr std::uint64_t kAblationSeeds[] = {0, 1, 2};
constexpr double kFocalBceTol = 1e-9;
constexpr double kDiceTol = 1e-12;
constexpr std::size_t kEdgeMaps = 50;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Toy recipe: momentum SGD, lr 0.003, one decay by 10x after 70% of steps.
RunConfig toy_run(Variant variant, HeadKind head, std::size_t steps, std::uint64_t seed) {
  RunConfig cfg = default_run_config();
  cfg.seed = seed;
  cfg.model.shrunk.variant = variant;
  if (variant == Variant::kShrunk) cfg.model.shrunk.qd_layer = 2;
  cfg.model.head = head;
  cfg.train.lr = 0.003;
  cfg.train.momentum = 0.9;
  cfg.train.batch_size = 4;
  cfg.train.steps = steps;
  cfg.train.decay_every = steps * 7 / 10;
  cfg.train.decay_factor = 0.1;
  cfg.train.augment = false;
  return cfg;
}

// ---- 1: gradients ----

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst_prim = 0.0, worst_model = 0.0;
  std::string where;
  std::size_t checks = 0;
  for (const auto& c : testing::primitive_cases()) {
    for (std::uint64_t s = 0; s < kGradSeeds; ++s) {
      const double e = testing::check_primitive_case(c, s);
      ++checks;
      if (e > worst_prim) {
        worst_prim = e;
        if (e > kGradTol) where = c.label + " seed " + std::to_string(s);
      }
    }
  }
  const std::pair<Variant, HeadKind> models[] = {{Variant::kSingle, HeadKind::kAtm},
                                                 {Variant::kShrunk, HeadKind::kAtm},
                                                 {Variant::kShrunkPP, HeadKind::kAtm},
                                                 {Variant::kSingle, HeadKind::kLinear}};
  for (const auto& [v, h] : models) {
    for (std::uint64_t s = 0; s < kGradSeeds; ++s) {
      const auto r = testing::composite_grad_check(testing::tiny_model_config(v, h), 1000 + s, 4, kGradStep);
      ++checks;
      if (r.worst > worst_model) {
        worst_model = r.worst;
        if (r.worst > kGradTol) where = variant_name(v) + "/" + head_name(h) + " " + r.worst_param;
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_prim <= kGradTol && worst_model <= kGradTol && secs < kGradBudgetSec;
  o.detail = std::to_string(checks) + " checks, worst primitive " + fmt("%.2e", worst_prim) +
             ", worst composed " + fmt("%.2e", worst_model) + ", " + fmt("%.1f s", secs);
  if (!where.empty()) o.detail += ", failing at " + where;
  return o;
}

// ---- 2: decode equivalence ----

// Half-pixel bilinear weights of output index i over an input of size n.
void interp(std::size_t n, std::size_t out, std::size_t i, std::size_t& a, std::size_t& b, double& t) {
  double src = (i + 0.5) * static_cast<double>(n) / static_cast<double>(out) - 0.5;
  src = std::max(src, 0.0);
  a = std::min(static_cast<std::size_t>(std::floor(src)), n - 1);
  b = std::min(a + 1, n - 1);
  t = src - static_cast<double>(a);
}

Outcome decode_equivalence() {
  Rng rng(2024);
  std::size_t mismatches = 0, ties = 0;
  for (std::size_t inst = 0; inst < kDecodeInstances; ++inst) {
    const std::size_t n = 1 + rng.below(6);
    const GridSize g{1 + rng.below(8), 1 + rng.below(8)};
    const std::size_t H = g.h * (1 + rng.below(4)) + rng.below(3), W = g.w * (1 + rng.below(4)) + rng.below(3);
    Tensor sim({n, g.count()});
    for (double& v : sim.data()) v = 3.0 * rng.normal();
    Tensor probs({n, 2});
    for (std::size_t c = 0; c < n; ++c) {
      const double p = rng.uniform();
      probs[c * 2] = 1.0 - p;
      probs[c * 2 + 1] = p;
    }
    // Every fourth instance duplicates a class to exercise tie-breaking.
    if (n >= 2 && inst % 4 == 0) {
      for (std::size_t k = 0; k < g.count(); ++k) sim[(n - 1) * g.count() + k] = sim[k];
      probs[(n - 1) * 2] = probs[0];
      probs[(n - 1) * 2 + 1] = probs[1];
      ++ties;
    }
    Tape tape;
    const SegOutput seg = assemble_segmentation(sigmoid(tape.constant(sim)), g, tape.constant(probs), H, W);
    const LabelMap got = predict_labels(seg.seg_scores.value());

    for (std::size_t y = 0; y < H; ++y) {
      std::size_t y0, y1;
      double ty;
      interp(g.h, H, y, y0, y1, ty);
      for (std::size_t x = 0; x < W; ++x) {
        std::size_t x0, x1;
        double tx;
        interp(g.w, W, x, x0, x1, tx);
        std::size_t best = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) {
          auto m = [&](std::size_t r, std::size_t q) { return 1.0 / (1.0 + std::exp(-sim[c * g.count() + r * g.w + q])); };
          const double top = m(y0, x0) * (1.0 - tx) + m(y0, x1) * tx;
          const double bot = m(y1, x0) * (1.0 - tx) + m(y1, x1) * tx;
          const double v = probs[c * 2 + 1] * (top * (1.0 - ty) + bot * ty);
          if (v > best_v) {
            best_v = v;
            best = c;
          }
        }
        if (got.at(y, x) != best) ++mismatches;
      }
    }
  }
  return {mismatches == 0, std::to_string(kDecodeInstances) + " instances (" + std::to_string(ties) +
                               " with duplicated classes), " + std::to_string(mismatches) + " pixel mismatches"};
}

// ---- 3: cost calibration ----

Outcome cost_calibration() {
  const auto t0 = Clock::now();
  struct Band {
    std::string label;
    double value;
    double target;
  };
  std::vector<Band> bands;
  auto total = [](const std::string& n) { return static_cast<double>(count_variant_macs(preset_by_name(n)).total()); };
  bands.push_back({"base single+setr", total("vit-base-512-single-setr"), 107.3e9});
  bands.push_back({"base single+atm", total("vit-base-512-single-atm"), 115.8e9});
  bands.push_back({"base shrunk", total("vit-base-512-shrunk-atm"), 97.1e9});
  ArchPreset head = preset_by_name("vit-base-512-single-atm");
  head.include_upsample = false;
  bands.push_back({"atm head", static_cast<double>(count_atm_head_macs(head).total()), 6.89e9});
  head.include_upsample = true;
  bands.push_back({"atm head+upsample", static_cast<double>(count_atm_head_macs(head).total()), 6.89e9});
  bool ok = true;
  std::string detail;
  for (const Band& b : bands) {
    const double rel = b.value / b.target - 1.0;
    const bool in = std::abs(rel) <= kCostBand;
    ok = ok && in;
    detail += b.label + " " + fmt("%.2fG", b.value / 1e9) + " (" + fmt("%+.1f%%", 100 * rel) + "), ";
  }
  const double ratio = total("vit-large-640-shrunkpp-atm") / total("vit-large-640-single-atm");
  const bool ratio_ok = std::abs(ratio - kLargeRatio) <= kLargeRatioTol;
  const double secs = seconds_since(t0);
  detail += "large shrunk++/single " + fmt("%.3f", ratio) + ", " + fmt("%.3f s", secs);
  return {ok && ratio_ok && secs < kCostBudgetSec, detail};
}

// ---- 4: schedule cross-check ----

Outcome schedule_crosscheck() {
  std::size_t equal = 0;
  std::string bad;
  const auto cases = testing::schedule_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto r = testing::check_schedule(cases[i].cfg, 40 + i);
    if (r.equal) {
      ++equal;
    } else {
      bad += " " + cases[i].label;
    }
  }
  std::string d = std::to_string(equal) + "/" + std::to_string(cases.size()) + " configs match";
  if (!bad.empty()) d += ", differing:" + bad;
  return {equal == cases.size() && cases.size() == 5, d};
}

// ---- 5: continual learning ----

Outcome continual_run(const std::string& work) {
  const auto t0 = Clock::now();
  RunConfig cfg = toy_run(Variant::kSingle, HeadKind::kAtm, kClStepsPerTask, 0);
  cfg.data.num_classes = cfg.model.num_classes = 6;
  cfg.cl.tasks = {{1, {0, 1, 2, 3}}, {2, {4, 5}}};
  cfg.cl.steps_per_task = kClStepsPerTask;
  const ClOutcome r = run_continual(cfg, work + "/cl");
  const double secs = seconds_since(t0);
  const ForgettingRow& first = r.forgetting.rows.front();
  const bool ok = r.head_outputs_identical && r.raw_output_drift == 0.0 && r.frozen_checksums_equal &&
                  first.drop <= kClDropPoints && secs < kClBudgetSec;
  std::string d = "head-1 outputs " + std::string(r.head_outputs_identical ? "bit-identical" : "DIFFER") +
                  " on " + std::to_string(r.pinned_batch) + " images, checksums " +
                  (r.frozen_checksums_equal ? "unchanged" : "CHANGED") + ", task-1 mIoU " +
                  fmt("%.2f", first.first) + " -> " + fmt("%.2f", first.last) + " (drop " +
                  fmt("%.2f", first.drop) + " pts), task-2 mIoU " +
                  fmt("%.2f", r.forgetting.rows.back().last) + ", " + fmt("%.0f s", secs);
  return {ok, d};
}

// ---- 6, 7: toy training ----

struct ToyResult {
  double miou = 0.0;
  double seconds = 0.0;
};

ToyResult toy_train(const RunConfig& cfg, const std::string& dir) {
  const auto t0 = Clock::now();
  const TrainOutcome r = run_training(cfg, dir);
  return {r.final_eval.miou, seconds_since(t0)};
}

Outcome toy_training(const std::string& work) {
  const ToyResult single = toy_train(toy_run(Variant::kSingle, HeadKind::kAtm, kToySteps, 0), work + "/toy_single");
  const ToyResult shrunk = toy_train(toy_run(Variant::kShrunk, HeadKind::kAtm, kToySteps, 0), work + "/toy_shrunk");
  const bool ok = single.miou >= kSingleBar && shrunk.miou >= kShrunkBar && single.seconds < kToyBudgetSec &&
                  shrunk.seconds < kToyBudgetSec;
  return {ok, "single " + fmt("%.4f", single.miou) + " (bar 0.70, " + fmt("%.0f s", single.seconds) +
                  "), shrunk " + fmt("%.4f", shrunk.miou) + " (bar 0.65, " + fmt("%.0f s", shrunk.seconds) +
                  "), " + std::to_string(kToySteps) + " steps"};
}

Outcome ablation(const std::string& work) {
  double atm = 0.0, linear = 0.0;
  std::string per_seed;
  for (std::uint64_t s : kAblationSeeds) {
    const std::string tag = std::to_string(s);
    const double a = toy_train(toy_run(Variant::kSingle, HeadKind::kAtm, kAblationSteps, s), work + "/abl_atm_" + tag).miou;
    const double l = toy_train(toy_run(Variant::kSingle, HeadKind::kLinear, kAblationSteps, s), work + "/abl_lin_" + tag).miou;
    atm += a;
    linear += l;
    per_seed += " seed " + tag + ": " + fmt("%.4f", a) + "/" + fmt("%.4f", l) + ";";
  }
  const double n = static_cast<double>(std::size(kAblationSeeds));
  atm /= n;
  linear /= n;
  return {atm >= linear, "mean atm " + fmt("%.4f", atm) + " vs linear " + fmt("%.4f", linear) + " over " +
                             std::to_string(std::size(kAblationSeeds)) + " seeds, " +
                             std::to_string(kAblationSteps) + " steps (atm/linear:" + per_seed + ")"};
}

// ---- 8: loss identities ----

Outcome loss_identities() {
  Rng rng(88);
  double focal_err = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + rng.below(4), h = 1 + rng.below(6), w = 1 + rng.below(6);
    Tensor m({n, h, w}), g({n, h, w});
    for (std::size_t i = 0; i < m.numel(); ++i) {
      m[i] = rng.uniform(0.01, 0.99);
      g[i] = static_cast<double>(rng.below(2));
    }
    double bce = 0.0;
    for (std::size_t i = 0; i < m.numel(); ++i) bce -= g[i] * std::log(m[i]) + (1 - g[i]) * std::log(1 - m[i]);
    bce /= static_cast<double>(m.numel());
    Tape tape;
    focal_err = std::max(focal_err, std::abs(focal_loss(tape.constant(m), g, 0.0).value().item() - bce));
  }

  // Binary mask == gt: each class gives 1 - (2S + s)/(2S + s), zero up to rounding.
  double dice_worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + rng.below(4), h = 1 + rng.below(6), w = 1 + rng.below(6);
    Tensor g({n, h, w});
    for (double& v : g.data()) v = static_cast<double>(rng.below(2));
    if (t % 5 == 0) g = Tensor({n, h, w}, 0.0);  // empty classes leave only the smoothing term
    Tape tape;
    dice_worst = std::max(dice_worst, std::abs(dice_loss(tape.constant(g), g, 1.0).value().item()));
  }
  const bool dice_ok = dice_worst <= kDiceTol;

  // total == sum of terms with lambda_focal = 20, lambda_dice = 1.
  LossWeights lw;
  lw.focal = 20.0;
  lw.dice = 1.0;
  bool total_ok = true;
  for (int t = 0; t < 10; ++t) {
    Tape tape;
    std::vector<MaskTarget> terms;
    double expected = 0.0;
    for (int k = 0; k < 3; ++k) {
      const std::size_t n = 3;
      Tensor m({n, 4, 4}), g({n, 4, 4}), p({n, 2}), pres({n});
      for (std::size_t i = 0; i < m.numel(); ++i) {
        m[i] = rng.uniform(0.05, 0.95);
        g[i] = static_cast<double>(rng.below(2));
      }
      for (std::size_t c = 0; c < n; ++c) {
        const double q = rng.uniform(0.05, 0.95);
        p[c * 2] = 1 - q;
        p[c * 2 + 1] = q;
        pres[c] = static_cast<double>(rng.below(2));
      }
      const double weight = k == 2 ? 0.5 : 1.0;
      const MaskTarget mt{tape.constant(m), tape.constant(p), g, {}, pres, weight};
      const double cls = classification_loss(mt.class_probs, pres).value().item();
      const double f = focal_loss(mt.mask, g, lw.focal_gamma).value().item();
      const double d = dice_loss(mt.mask, g, lw.dice_smooth).value().item();
      double term = (cls + 20.0 * f) + 1.0 * d;
      if (weight != 1.0) term *= weight;
      expected = k == 0 ? term : expected + term;
      terms.push_back(mt);
    }
    const double got = total_loss(terms, lw).total.value().item();
    total_ok = total_ok && got == expected;
  }
  return {focal_err <= kFocalBceTol && dice_ok && total_ok,
          "focal(gamma=0) vs BCE max err " + fmt("%.1e", focal_err) + ", dice(mask==gt) max " +
              fmt("%.1e", dice_worst) + ", weighted total " + (total_ok ? "exact" : "MISMATCH")};
}

// ---- 9: EQD / edges ----

Tensor edge_oracle(const LabelMap& m, std::size_t p) {
  const std::size_t gw = m.width / p;
  Tensor out({(m.height / p) * gw});
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      const bool diff = (y > 0 && m.at(y - 1, x) != m.at(y, x)) ||
                        (y + 1 < m.height && m.at(y + 1, x) != m.at(y, x)) ||
                        (x > 0 && m.at(y, x - 1) != m.at(y, x)) ||
                        (x + 1 < m.width && m.at(y, x + 1) != m.at(y, x));
      if (diff) out[(y / p) * gw + x / p] = 1.0;
    }
  }
  return out;
}

Outcome eqd_edge_suite() {
  Rng rng(99);
  std::size_t edge_ok = 0, eqd_ok = 0;
  for (std::size_t t = 0; t < kEdgeMaps; ++t) {
    const std::size_t p = 2 + rng.below(4);
    const std::size_t stride = 1 + rng.below(3);
    const GridSize g{stride * (1 + rng.below(4)), stride * (1 + rng.below(4))};
    LabelMap m(g.h * p, g.w * p);
    // Sparse rectangles over a background so both edge and flat patches occur.
    const std::size_t rects = rng.below(4);
    for (std::size_t r = 0; r < rects; ++r) {
      const std::size_t y0 = rng.below(m.height), x0 = rng.below(m.width);
      const std::size_t y1 = std::min(m.height, y0 + 1 + rng.below(m.height)), x1 = std::min(m.width, x0 + 1 + rng.below(m.width));
      const auto c = static_cast<std::uint8_t>(1 + rng.below(4));
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) m.at(y, x) = c;
      }
    }
    const Tensor edges = gt_edge_mask(m, p);
    if (edges.shape() == Shape{g.count()} && edges.storage() == edge_oracle(m, p).storage()) ++edge_ok;

    std::set<std::size_t> want;
    for (std::size_t i = 0; i < g.h; i += stride) {
      for (std::size_t j = 0; j < g.w; j += stride) want.insert(i * g.w + j);
    }
    for (std::size_t k = 0; k < g.count(); ++k) {
      if (edges[k] == 1.0) want.insert(k);
    }
    const TokenSelection sel = eqd_select(g, stride, edges);
    if (std::vector<std::size_t>(want.begin(), want.end()) == sel.retained) ++eqd_ok;
  }
  const double tau = 0.7;
  Tensor scores({4, 2}, std::vector<double>{0.3, 0.7, 0.31, 0.69, 0.2, 0.8, 1.0, 0.0});
  const Tensor mask = edge_mask_from_scores(scores, tau);
  const bool boundary = mask.storage() == std::vector<double>{1, 0, 1, 0};
  return {edge_ok == kEdgeMaps && eqd_ok == kEdgeMaps && boundary,
          "edge masks " + std::to_string(edge_ok) + "/" + std::to_string(kEdgeMaps) + ", eqd " +
              std::to_string(eqd_ok) + "/" + std::to_string(kEdgeMaps) + ", s == tau " +
              (boundary ? "included" : "EXCLUDED")};
}

// ---- 10: persistence ----

std::vector<std::string> run_files(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

Outcome persistence(const std::string& work) {
  // Checkpoint: snapped parameters survive bit-exactly, and so do predictions.
  RunConfig cfg = toy_run(Variant::kShrunkPP, HeadKind::kAtm, 0, 3);
  ParamStore store;
  Rng rng(3);
  init_model(store, cfg.model, rng);
  snap_to_storage(store);
  const std::string ck = work + "/persist/model.sgv";
  save_checkpoint(ck, store, &rng, run_config_text(cfg));
  LoadedModel back = load_model(ck);
  bool ck_ok = back.store.entries().size() == store.entries().size();
  for (const auto& [name, p] : store.entries()) {
    ck_ok = ck_ok && back.store.entries().at(name).value.storage() == p.value.storage();
  }
  const Sample s = render_sample(cfg.data, Split::kVal, 0);
  const Tensor img = image_to_tensor(s.image);
  ck_ok = ck_ok && model_predict(store, img, cfg.model) == model_predict(back.store, img, cfg.model);
  ck_ok = ck_ok && encode_checkpoint({}).size() == 12;

  // Dataset: files on disk load back to the in-memory samples.
  DatasetSpec spec = cfg.data;
  spec.train_size = 20;
  spec.val_size = 10;
  gen_synthetic_dataset(spec, work + "/persist/data");
  const bool data_ok = load_split(work + "/persist/data", Split::kTrain, spec.num_classes) == make_split(spec, Split::kTrain) &&
                       load_split(work + "/persist/data", Split::kVal, spec.num_classes) == make_split(spec, Split::kVal);

  // End to end: two runs with one seed give identical bytes.
  RunConfig e2e = toy_run(Variant::kShrunk, HeadKind::kAtm, 30, 5);
  e2e.train.eval_every = 10;
  run_training(e2e, work + "/persist/run_a");
  run_training(e2e, work + "/persist/run_b");
  const auto files = run_files(work + "/persist/run_a");
  bool e2e_ok = files == run_files(work + "/persist/run_b") && !files.empty();
  for (const std::string& f : files) {
    e2e_ok = e2e_ok && read_file(work + "/persist/run_a/" + f) == read_file(work + "/persist/run_b/" + f);
  }
  return {ck_ok && data_ok && e2e_ok, std::string("checkpoint ") + (ck_ok ? "bit-exact" : "DIFFERS") +
                                          ", dataset " + (data_ok ? "bit-exact" : "DIFFERS") + ", end-to-end " +
                                          std::to_string(files.size()) + " files " +
                                          (e2e_ok ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segvit acceptance suite"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work-dir", work, "Scratch directory for runs");
  app.add_option("--only", only, "Run only these criteria");
  std::vector<int> expect_fail;
  app.add_option("--expect-fail", expect_fail, "Known failures: still reported, not counted in the exit code");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"decode equivalence", decode_equivalence},
      {"cost calibration", cost_calibration},
      {"cost/executable schedule", schedule_crosscheck},
      {"zero raw-output forgetting", [&] { return continual_run(work); }},
      {"toy training bar", [&] { return toy_training(work); }},
      {"ablation direction (atm >= linear)", [&] { return ablation(work); }},
      {"loss identities", loss_identities},
      {"eqd/edge suite", eqd_edge_suite},
      {"persistence", [&] { return persistence(work); }},
  };
  int failed = 0, expected = 0, unexpected_pass = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool known = std::find(expect_fail.begin(), expect_fail.end(), id) != expect_fail.end();
    if (!o.pass) (known ? expected : failed) += 1;
    if (o.pass && known) ++unexpected_pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (failed == 0 ? "no unexpected failures" : std::to_string(failed) + " criteria failed");
  if (expected > 0) std::cout << ", " << expected << " known failure(s)";
  if (unexpected_pass > 0) std::cout << ", " << unexpected_pass << " known failure(s) now pass";
  std::cout << std::endl;
  return failed == 0 ? 0 : 1;
}

#include "segvit/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "segvit/errors.hpp"
#include "segvit/ops.hpp"

namespace segvit {

namespace {

std::string describe(const StepLog& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "non-finite loss at step %zu: total=%g cls=%g focal=%g dice=%g edge=%g", s.step,
                s.total, s.cls, s.focal, s.dice, s.edge);
  return buf;
}

bool finite(const StepLog& s) {
  return std::isfinite(s.total) && std::isfinite(s.cls) && std::isfinite(s.focal) &&
         std::isfinite(s.dice) && std::isfinite(s.edge);
}

// Flip with probability 1/2, then with probability 1/2 a crop covering
// 60-100% of each side, resized back.
Sample augment(const Sample& raw, Rng& rng) {
  Sample s = rng.below(2) == 1 ? hflip(raw) : raw;
  if (rng.below(2) == 1) {
    const std::size_t H = s.labels.height, W = s.labels.width;
    const auto h = static_cast<std::size_t>(std::ceil(H * rng.uniform(0.6, 1.0)));
    const auto w = static_cast<std::size_t>(std::ceil(W * rng.uniform(0.6, 1.0)));
    const std::size_t hh = std::min(h, H), ww = std::min(w, W);
    s = resize_crop(s, rng.below(H - hh + 1), rng.below(W - ww + 1), hh, ww);
  }
  return s;
}

}  // namespace

TrainingDiverged::TrainingDiverged(const StepLog& at) : std::runtime_error(describe(at)), at_(at) {}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  if (cfg.decay_every == 0 || step == 0) return cfg.lr;
  const auto k = static_cast<double>((step - 1) / cfg.decay_every);
  return cfg.lr * std::pow(cfg.decay_factor, k);
}

std::vector<StepLog> train_steps(ParamStore& store, const TrainConfig& cfg, std::size_t num_steps,
                                 const std::vector<Sample>& data, const SampleLoss& loss, Rng& rng,
                                 const StepHook& hook) {
  cfg.validate();
  if (num_steps > 0 && data.empty()) throw ContractViolation("train: empty training set");
  std::vector<StepLog> log;
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  for (std::size_t step = 1; step <= num_steps; ++step) {
    Tape tape;
    Binder bind(tape, store, true);
    Var total;
    StepLog s;
    s.step = step;
    s.lr = learning_rate(cfg, step);
    const double inv = 1.0 / static_cast<double>(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const Sample& raw = data[order[cursor++]];
      const LossBreakdown l = cfg.augment ? loss(bind, augment(raw, rng)) : loss(bind, raw);
      total = total.valid() ? add(total, l.total) : l.total;
      s.cls += inv * l.cls;
      s.focal += inv * l.focal;
      s.dice += inv * l.dice;
      s.edge += inv * l.edge;
    }
    total = scale(total, inv);
    s.total = total.value().item();
    if (!finite(s)) throw TrainingDiverged(s);
    if (tape.requires_grad(total)) {
      const GradientMap grads = tape.backward(total);
      std::vector<std::pair<Parameter*, const Tensor*>> updates;
      double norm2 = 0.0;
      for (auto& [name, p] : store.entries()) {
        const auto it = bind.bound().find(name);
        if (it == bind.bound().end()) continue;
        const Tensor* g = grads.find(it->second);
        if (g == nullptr) continue;
        if (p.frozen) throw ContractViolation("train: gradient reached frozen '" + name + "'");
        for (double gi : g->data()) norm2 += gi * gi;
        updates.emplace_back(&p, g);
      }
      if (!std::isfinite(norm2)) throw TrainingDiverged(s);
      const double norm = std::sqrt(norm2);
      const double clip = cfg.grad_clip > 0.0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
      for (auto& [p, g] : updates) {
        for (std::size_t i = 0; i < g->numel(); ++i) {
          p->velocity[i] = cfg.momentum * p->velocity[i] + clip * (*g)[i];
          p->value[i] -= s.lr * p->velocity[i];
        }
      }
    }
    log.push_back(s);
    if (hook) hook(s);
  }
  return log;
}

std::vector<StepLog> train_model(ParamStore& store, const RunConfig& cfg,
                                 const std::vector<Sample>& data, Rng& rng, const StepHook& hook) {
  cfg.validate();
  const ModelConfig& mc = cfg.model;
  SampleLoss loss = [&mc](Binder& bind, const Sample& s) {
    ModelOutput out = model_forward(bind, image_to_tensor(s.image), mc);
    return model_loss(out, s.labels, mc);
  };
  return train_steps(store, cfg.train, cfg.train.steps, data, loss, rng, hook);
}

EvalReport evaluate(const Predictor& predict, const std::vector<Sample>& data, std::size_t num_classes,
                    const std::vector<std::vector<std::size_t>>& groups) {
  for (const Sample& s : data) {
    for (std::uint8_t l : s.labels.labels) {
      if (l != kIgnoreLabel && l >= num_classes) {
        throw ContractViolation("evaluate: label " + std::to_string(l) + " outside " +
                                std::to_string(num_classes) + " classes");
      }
    }
  }
  EvalReport r;
  r.confusion = ConfusionAccumulator(num_classes);
  for (const Sample& s : data) {
    const LabelMap pred = predict(image_to_tensor(s.image));
    r.confusion.accumulate(pred, s.labels);
  }
  for (std::size_t c = 0; c < num_classes; ++c) r.iou.push_back(r.confusion.iou(c));
  r.miou = r.confusion.miou();
  if (!groups.empty()) r.grouped = grouped_miou(r.confusion, groups);
  return r;
}

EvalReport evaluate_model(ParamStore& store, const ModelConfig& cfg, const std::vector<Sample>& data,
                          const std::vector<std::vector<std::size_t>>& groups) {
  for (const Sample& s : data) {
    if (s.image.height != cfg.encoder.image_height || s.image.width != cfg.encoder.image_width) {
      throw ContractViolation("evaluate: sample size differs from the model input size");
    }
  }
  return evaluate([&](const Tensor& img) { return model_predict(store, img, cfg); }, data,
                  cfg.num_classes, groups);
}

std::string format_eval(const EvalReport& report) {
  std::string out = "class\tiou\n";
  char buf[96];
  for (std::size_t c = 0; c < report.iou.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\n", c, report.iou[c]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "miou\t%.6f\n", report.miou);
  out += buf;
  if (report.grouped) {
    for (std::size_t g = 0; g < report.grouped->groups.size(); ++g) {
      std::snprintf(buf, sizeof buf, "group%zu\t%.6f\n", g + 1, report.grouped->groups[g]);
      out += buf;
    }
  }
  return out;
}

std::string format_log_header() { return "step\tlr\ttotal\tcls\tfocal\tdice\tedge\n"; }

std::string format_log_line(const StepLog& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu\t%.6g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", s.step, s.lr, s.total,
                s.cls, s.focal, s.dice, s.edge);
  return buf;
}

}  // namespace segvit

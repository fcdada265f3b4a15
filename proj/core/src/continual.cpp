#include "segvit/continual.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "segvit/errors.hpp"
#include "segvit/ops.hpp"

namespace segvit {

namespace {

std::string head_prefix(std::size_t t) { return "task" + std::to_string(t); }

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

bool is_head_param(const std::string& name) {
  if (!starts_with(name, "task")) return false;
  std::size_t i = 4;
  while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i]))) ++i;
  return i > 4 && i < name.size() && name[i] == '.';
}

// Owner of a parameter: 0 for the shared encoder, t for head t.
std::size_t owner_of(const std::string& name) {
  if (!is_head_param(name)) return 0;
  return static_cast<std::size_t>(std::stoul(name.substr(4, name.find('.') - 4)));
}

}  // namespace

const TaskHead& CLModel::head(std::size_t task_id) const {
  if (task_id == 0 || task_id > heads.size()) {
    throw ContractViolation("continual: unknown task " + std::to_string(task_id) + " (model has " +
                            std::to_string(heads.size()) + " heads)");
  }
  return heads[task_id - 1];
}

std::vector<std::string> CLModel::frozen_names() const { return store.frozen_names(); }
std::vector<std::string> CLModel::trainable_names() const { return store.trainable_names(); }

CLModel make_cl_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.head != HeadKind::kAtm) throw ContractViolation("continual: heads must be ATM heads");
  CLModel m;
  m.cfg = cfg;
  init_encoder(m.store, cfg.encoder, rng);
  init_shrunk(m.store, cfg.encoder, cfg.shrunk, rng);
  return m;
}

std::size_t cl_head_param_count(std::size_t num_classes, std::size_t width, double mlp_ratio) {
  return decoder_param_count(num_classes, width, 1, mlp_ratio);
}

void grow_task_head(CLModel& model, const TaskSpec& spec, Rng& rng) {
  const std::size_t t = model.heads.size() + 1;
  if (spec.task_id != t) {
    throw ContractViolation("continual: expected task " + std::to_string(t) + ", got " +
                            std::to_string(spec.task_id));
  }
  if (spec.class_ids.empty()) throw ContractViolation("continual: task has no classes");
  std::set<std::size_t> seen;
  for (const TaskHead& h : model.heads) seen.insert(h.spec.class_ids.begin(), h.spec.class_ids.end());
  std::set<std::size_t> own;
  for (std::size_t c : spec.class_ids) {
    if (c >= model.cfg.num_classes) {
      throw ContractViolation("continual: class " + std::to_string(c) + " outside [0, " +
                              std::to_string(model.cfg.num_classes) + ")");
    }
    if (seen.count(c) || !own.insert(c).second) {
      throw ContractViolation("continual: class " + std::to_string(c) + " already assigned");
    }
  }
  if (t == 1 && !own.count(0)) throw ContractViolation("continual: task 1 must own background 0");
  if (t > 1) freeze_prior_tasks(model, t);
  TaskHead h{spec, head_prefix(t), false};
  init_decoder(model.store, h.prefix, spec.class_ids.size(), model.cfg.encoder.width, 1,
               model.cfg.encoder.mlp_ratio, rng);
  model.heads.push_back(std::move(h));
}

void freeze_prior_tasks(CLModel& model, std::size_t t) {
  if (t < 2) throw ContractViolation("continual: freezing needs t >= 2");
  if (t - 1 > model.heads.size()) {
    throw ContractViolation("continual: cannot freeze " + std::to_string(t - 1) + " tasks, model has " +
                            std::to_string(model.heads.size()));
  }
  for (auto& [name, p] : model.store.entries()) {
    const std::size_t owner = owner_of(name);
    if (owner < t) p.frozen = true;
  }
  model.encoder_frozen = true;
  for (std::size_t i = 0; i + 1 < t; ++i) model.heads[i].frozen = true;
  model.frozen_checksum = model.store.checksum(model.store.frozen_names());
}

void set_trainable(CLModel& model, const std::string& name) {
  const std::size_t owner = owner_of(name);
  const bool locked = owner == 0 ? model.encoder_frozen : model.head(owner).frozen;
  if (locked) throw ContractViolation("continual: '" + name + "' is frozen");
  model.store.at(name).frozen = false;
}

void verify_frozen(const CLModel& model) {
  if (!model.encoder_frozen) return;
  if (model.store.checksum(model.store.frozen_names()) != model.frozen_checksum) {
    throw DataError("continual: frozen parameters changed");
  }
}

CLOutput cl_forward(Binder& bind, const CLModel& model, const Tensor& image, std::size_t upto_task) {
  model.head(upto_task);
  const ModelConfig& cfg = model.cfg;
  const EncoderConfig& enc = cfg.encoder;
  Tape& tape = bind.tape();
  EncoderVars ew = bind_encoder(bind, enc);
  CLOutput out;
  switch (cfg.shrunk.variant) {
    case Variant::kSingle:
      out.encoder = single_forward(tape, image, enc, ew);
      break;
    case Variant::kShrunk:
      out.encoder = shrunk_forward(tape, image, enc, cfg.shrunk, ew, bind_shrunk(bind, enc, cfg.shrunk));
      break;
    case Variant::kShrunkPP:
      out.encoder = shrunkpp_forward(tape, image, enc, cfg.shrunk, ew, bind_shrunk(bind, enc, cfg.shrunk));
      break;
  }
  const TokenGrid& last = out.encoder.taps.back();
  for (std::size_t t = 1; t <= upto_task; ++t) {
    const TaskHead& h = model.head(t);
    DecoderVars dw = bind_decoder(bind, h.prefix, 1);
    TaskOutput o;
    o.task_id = t;
    o.stage = atm_stage(dw.class_tokens, last, dw.stages[0], enc.heads);
    o.class_probs = classify_tokens(o.stage.tokens, dw.classifier);
    o.seg = assemble_segmentation(o.stage.mask, last.grid, o.class_probs, enc.image_height,
                                  enc.image_width);
    out.tasks.push_back(std::move(o));
  }
  return out;
}

TaskTargets task_targets(const LabelMap& gt, const TaskSpec& spec, bool first_task) {
  const std::size_t n = spec.class_ids.size();
  std::vector<int> local(256, -1);
  for (std::size_t i = 0; i < n; ++i) local.at(spec.class_ids[i]) = static_cast<int>(i);
  int background = -1;
  if (first_task) {
    const auto it = std::find(spec.class_ids.begin(), spec.class_ids.end(), 0u);
    if (it == spec.class_ids.end()) throw ContractViolation("continual: task 1 must own background 0");
    background = static_cast<int>(it - spec.class_ids.begin());
  }
  const std::size_t hw = gt.size();
  TaskTargets r{Tensor({n, gt.height, gt.width}), Tensor({gt.height, gt.width}), Tensor({n})};
  for (std::size_t p = 0; p < hw; ++p) {
    const std::uint8_t label = gt.labels[p];
    if (label == kIgnoreLabel) continue;
    r.valid[p] = 1.0;
    const int c = local[label] >= 0 ? local[label] : background;
    if (c < 0) continue;
    r.onehot[static_cast<std::size_t>(c) * hw + p] = 1.0;
    r.presence[static_cast<std::size_t>(c)] = 1.0;
  }
  return r;
}

LossBreakdown cl_task_loss(const CLOutput& out, const LabelMap& gt, const CLModel& model,
                           std::size_t task_id) {
  const TaskHead& h = model.head(task_id);
  if (task_id > out.tasks.size()) {
    throw ContractViolation("continual: forward did not run task " + std::to_string(task_id));
  }
  const TaskOutput& o = out.tasks[task_id - 1];
  const TaskTargets tt = task_targets(gt, h.spec, task_id == 1);
  Tensor token_valid;
  Tensor token_gt = pool_to_tokens(tt.onehot, tt.valid, model.cfg.encoder.patch_size, &token_valid);
  std::vector<MaskTarget> terms;
  terms.push_back({o.seg.masks, o.class_probs, tt.onehot, tt.valid, tt.presence, 1.0});
  terms.push_back({o.stage.mask, o.class_probs, token_gt, token_valid, tt.presence, model.cfg.loss.aux});
  Var edge;
  if (task_id == 1 && model.cfg.shrunk.variant == Variant::kShrunkPP) {
    edge = edge_loss(out.encoder.edge_probs, gt_edge_mask(gt, model.cfg.encoder.patch_size));
  }
  return total_loss(terms, model.cfg.loss, edge);
}

LabelMap cl_merge_predict(const std::vector<TaskScores>& outputs) {
  if (outputs.empty()) throw ContractViolation("cl_merge_predict: no task outputs");
  std::set<std::size_t> ids;
  const Shape& s0 = outputs.front().seg_scores.shape();
  if (s0.size() != 3) throw ContractViolation("cl_merge_predict: scores must be [N, H, W]");
  for (const TaskScores& t : outputs) {
    const Shape& s = t.seg_scores.shape();
    if (s.size() != 3 || s[0] != t.class_ids.size() || s[1] != s0[1] || s[2] != s0[2]) {
      throw ContractViolation("cl_merge_predict: score shape does not match class list");
    }
    for (std::size_t c : t.class_ids) {
      if (c >= kIgnoreLabel) throw ContractViolation("cl_merge_predict: class id out of range");
      if (!ids.insert(c).second) {
        throw ContractViolation("cl_merge_predict: class " + std::to_string(c) + " appears twice");
      }
    }
  }
  const std::size_t h = s0[1], w = s0[2], hw = h * w;
  LabelMap out(h, w);
  for (std::size_t p = 0; p < hw; ++p) {
    double best = -INFINITY;
    std::size_t arg = 0;
    for (const TaskScores& t : outputs) {
      for (std::size_t i = 0; i < t.class_ids.size(); ++i) {
        const double v = t.seg_scores[i * hw + p];
        if (v > best) {
          best = v;
          arg = t.class_ids[i];
        }
      }
    }
    out.labels[p] = static_cast<std::uint8_t>(arg);
  }
  return out;
}

LabelMap cl_predict(CLModel& model, const Tensor& image, std::size_t upto_task) {
  Tape tape;
  Binder bind(tape, model.store, false);
  CLOutput out = cl_forward(bind, model, image, upto_task);
  std::vector<TaskScores> scores;
  for (const TaskOutput& o : out.tasks) {
    scores.push_back({model.head(o.task_id).spec.class_ids, o.seg.seg_scores.value()});
  }
  return cl_merge_predict(scores);
}

LabelMap labels_seen_at(const LabelMap& gt, const std::vector<TaskSpec>& tasks, std::size_t step) {
  std::vector<bool> seen(256, false);
  seen[kIgnoreLabel] = true;
  for (std::size_t i = 0; i < std::min(step, tasks.size()); ++i) {
    for (std::size_t c : tasks[i].class_ids) seen.at(c) = true;
  }
  LabelMap out = gt;
  for (std::uint8_t& l : out.labels) {
    if (!seen[l]) l = 0;
  }
  return out;
}

ForgettingReport forgetting_report(const std::vector<EvalRecord>& history) {
  if (history.empty()) throw DataError("forgetting_report: empty history");
  std::map<std::size_t, std::map<std::size_t, double>> by_task;
  std::size_t final_step = 0;
  for (const EvalRecord& r : history) {
    if (!by_task[r.task].emplace(r.step, r.miou).second) {
      throw DataError("forgetting_report: duplicate record for task " + std::to_string(r.task) +
                      " at step " + std::to_string(r.step));
    }
    final_step = std::max(final_step, r.step);
  }
  ForgettingReport rep;
  for (const auto& [task, steps] : by_task) {
    const std::size_t first = steps.begin()->first;
    for (std::size_t s = first; s <= final_step; ++s) {
      if (!steps.count(s)) {
        throw DataError("forgetting_report: task " + std::to_string(task) + " missing step " +
                        std::to_string(s));
      }
    }
    ForgettingRow row{task, first, steps.at(first), steps.at(final_step), 0.0};
    row.drop = row.first - row.last;
    rep.rows.push_back(row);
    rep.average_drop += row.drop;
  }
  rep.average_drop /= static_cast<double>(rep.rows.size());
  return rep;
}

std::string forgetting_table(const ForgettingReport& report) {
  std::ostringstream os;
  char buf[128];
  os << "task  first_step  first_miou  last_miou    drop\n";
  for (const ForgettingRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%4zu  %10zu  %10.2f  %9.2f  %6.2f\n", r.task, r.first_step,
                  r.first, r.last, r.drop);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "avg   %10s  %10s  %9s  %6.2f\n", "", "", "", report.average_drop);
  os << buf;
  return os.str();
}

}  // namespace segvit

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "segvit/atm.hpp"
#include "segvit/labels.hpp"
#include "segvit/losses.hpp"
#include "segvit/metrics.hpp"
#include "segvit/model.hpp"

// Freeze-and-grow continual segmentation: one ATM head per task over a
// shared encoder that is trained with task 1 and frozen afterwards.
namespace segvit {

struct TaskSpec {
  std::size_t task_id = 0;             // 1-based
  std::vector<std::size_t> class_ids;  // global ids; task 1 must contain background 0
};

struct TaskHead {
  TaskSpec spec;
  std::string prefix;  // "task{t}"
  bool frozen = false;
};

struct CLModel {
  ModelConfig cfg;  // encoder, variant and loss weights; num_classes is the global count
  ParamStore store;
  std::vector<TaskHead> heads;
  bool encoder_frozen = false;
  std::uint64_t frozen_checksum = 0;  // over frozen_names() when last frozen

  std::size_t num_tasks() const noexcept { return heads.size(); }
  const TaskHead& head(std::size_t task_id) const;
  std::vector<std::string> frozen_names() const;
  std::vector<std::string> trainable_names() const;
};

// Encoder (and Shrunk modules) only; heads are added by grow_task_head.
CLModel make_cl_model(const ModelConfig& cfg, Rng& rng);

std::size_t cl_head_param_count(std::size_t num_classes, std::size_t width, double mlp_ratio);

// Appends head t = num_tasks() + 1 and freezes everything that came before
// it when t >= 2.
void grow_task_head(CLModel& model, const TaskSpec& spec, Rng& rng);

// Freezes the encoder and heads 1..t-1. Idempotent.
void freeze_prior_tasks(CLModel& model, std::size_t t);

// Clears the frozen flag of one parameter; throws when it belongs to a
// frozen head or the frozen encoder.
void set_trainable(CLModel& model, const std::string& name);

// Throws DataError when any frozen tensor changed since it was frozen.
void verify_frozen(const CLModel& model);

struct TaskOutput {
  std::size_t task_id = 0;
  AtmStageOutput stage;
  Var class_probs;  // [N_t, 2]
  SegOutput seg;    // [N_t, H, W]
};

struct CLOutput {
  ShrunkResult encoder;
  std::vector<TaskOutput> tasks;  // heads 1..upto
};

// Shared taps feed heads 1..upto_task.
CLOutput cl_forward(Binder& bind, const CLModel& model, const Tensor& image, std::size_t upto_task);

// Task-local targets. Task 1 maps classes outside its set to background;
// later tasks treat such pixels as negatives for every class.
struct TaskTargets {
  Tensor onehot;    // [N_t, H, W]
  Tensor valid;     // [H, W]
  Tensor presence;  // [N_t]
};
TaskTargets task_targets(const LabelMap& gt, const TaskSpec& spec, bool first_task);

LossBreakdown cl_task_loss(const CLOutput& out, const LabelMap& gt, const CLModel& model,
                           std::size_t task_id);

struct TaskScores {
  std::vector<std::size_t> class_ids;
  Tensor seg_scores;  // [N_t, H, W]
};

// Concatenates per-task scores along the class axis and takes the argmax;
// result carries global class ids.
LabelMap cl_merge_predict(const std::vector<TaskScores>& outputs);

// Merged prediction with heads 1..upto_task, no gradients.
LabelMap cl_predict(CLModel& model, const Tensor& image, std::size_t upto_task);

// Labels not yet introduced by step t become background.
LabelMap labels_seen_at(const LabelMap& gt, const std::vector<TaskSpec>& tasks, std::size_t step);

struct EvalRecord {
  std::size_t step = 0;  // task index that was just trained
  std::size_t task = 0;  // class group evaluated
  double miou = 0.0;  // mIoU points
};

struct ForgettingRow {
  std::size_t task = 0;
  std::size_t first_step = 0;
  double first = 0.0;
  double last = 0.0;
  double drop = 0.0;  // first - last
};

struct ForgettingReport {
  std::vector<ForgettingRow> rows;
  double average_drop = 0.0;
};

ForgettingReport forgetting_report(const std::vector<EvalRecord>& history);
std::string forgetting_table(const ForgettingReport& report);

}  // namespace segvit

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "segvit/config.hpp"
#include "segvit/dataset.hpp"
#include "segvit/losses.hpp"
#include "segvit/metrics.hpp"
#include "segvit/params.hpp"

namespace segvit {

struct StepLog {
  std::size_t step = 0;  // 1-based
  double lr = 0.0;
  double total = 0.0;
  double cls = 0.0;
  double focal = 0.0;
  double dice = 0.0;
  double edge = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const StepLog& at);
  const StepLog& at() const noexcept { return at_; }

 private:
  StepLog at_;
};

// lr * decay_factor^floor((step - 1) / decay_every)
double learning_rate(const TrainConfig& cfg, std::size_t step);

// Loss of one sample on a shared tape.
using SampleLoss = std::function<LossBreakdown(Binder& bind, const Sample& sample)>;
using StepHook = std::function<void(const StepLog&)>;

// Momentum SGD over shuffled mini-batches: v = mu v + g, w -= lr v.
// Frozen parameters enter the tape as constants and are never written.
// Data order and augmentation draw from `rng`.
std::vector<StepLog> train_steps(ParamStore& store, const TrainConfig& cfg, std::size_t num_steps,
                                 const std::vector<Sample>& data, const SampleLoss& loss, Rng& rng,
                                 const StepHook& hook = {});

// Full model training on `data` with the model loss.
std::vector<StepLog> train_model(ParamStore& store, const RunConfig& cfg,
                                 const std::vector<Sample>& data, Rng& rng,
                                 const StepHook& hook = {});

struct EvalReport {
  ConfusionAccumulator confusion;
  std::vector<double> iou;  // NaN for classes absent from prediction and ground truth
  double miou = 0.0;
  std::optional<GroupedMiou> grouped;
};

using Predictor = std::function<LabelMap(const Tensor& image)>;

EvalReport evaluate(const Predictor& predict, const std::vector<Sample>& data, std::size_t num_classes,
                    const std::vector<std::vector<std::size_t>>& groups = {});
EvalReport evaluate_model(ParamStore& store, const ModelConfig& cfg, const std::vector<Sample>& data,
                          const std::vector<std::vector<std::size_t>>& groups = {});

std::string format_eval(const EvalReport& report);
std::string format_log_header();
std::string format_log_line(const StepLog& s);

}  // namespace segvit

#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "segvit/config.hpp"
#include "segvit/continual.hpp"
#include "segvit/train.hpp"

// End-to-end runs shared by the command-line tool and the acceptance suite.
namespace segvit {

struct TrainOutcome {
  ParamStore store;
  std::vector<StepLog> log;
  std::vector<std::pair<std::size_t, double>> evals;  // (step, val mIoU)
  EvalReport final_eval;
};

// Trains on the synthetic splits described by cfg.data. With a non-empty
// `out_dir`, writes model.sgv (+ .cfg), train_log.tsv, eval_log.tsv and
// eval.txt there. Final weights are rounded to storage precision.
TrainOutcome run_training(const RunConfig& cfg, const std::string& out_dir = "",
                          std::ostream* progress = nullptr);

// Rebuilds the model described by a checkpoint's config sidecar.
struct LoadedModel {
  RunConfig cfg;
  ParamStore store;
};
LoadedModel load_model(const std::string& checkpoint_path);

struct ClOutcome {
  CLModel model;
  std::vector<EvalRecord> history;  // grouped mIoU points per (step, task)
  ForgettingReport forgetting;
  bool head_outputs_identical = false;  // pinned batch, head 1, after task 1 vs final
  double raw_output_drift = 0.0;        // max |difference| over the same outputs
  bool frozen_checksums_equal = false;
  std::size_t pinned_batch = 0;
};

// Freeze-and-grow schedule over cfg.cl.tasks. Writes task{t}.sgv, cl_log.tsv,
// forgetting.txt and cl_report.txt under `out_dir` when non-empty.
ClOutcome run_continual(const RunConfig& cfg, const std::string& out_dir = "",
                        std::ostream* progress = nullptr);

}  // namespace segvit

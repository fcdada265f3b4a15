#include "segvit/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "segvit/checkpoint.hpp"
#include "segvit/errors.hpp"
#include "segvit/netpbm.hpp"

namespace segvit {

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string eval_log_line(std::size_t step, double miou) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\n", step, miou);
  return buf;
}

std::vector<std::vector<std::size_t>> task_groups(const std::vector<TaskSpec>& tasks) {
  std::vector<std::vector<std::size_t>> g;
  for (const TaskSpec& t : tasks) g.push_back(t.class_ids);
  return g;
}

// Validation labels as they are known after `step` tasks.
std::vector<Sample> relabel(const std::vector<Sample>& data, const std::vector<TaskSpec>& tasks,
                            std::size_t step) {
  std::vector<Sample> out = data;
  for (Sample& s : out) s.labels = labels_seen_at(s.labels, tasks, step);
  return out;
}

// Head-1 outputs on a fixed batch, as raw doubles.
std::vector<double> head_one_outputs(CLModel& model, const std::vector<Sample>& batch) {
  std::vector<double> out;
  for (const Sample& s : batch) {
    Tape tape;
    Binder bind(tape, model.store, false);
    const CLOutput o = cl_forward(bind, model, image_to_tensor(s.image), 1);
    for (double v : o.tasks.front().seg.masks.value().data()) out.push_back(v);
    for (double v : o.tasks.front().class_probs.value().data()) out.push_back(v);
  }
  return out;
}

}  // namespace

TrainOutcome run_training(const RunConfig& cfg, const std::string& out_dir, std::ostream* progress) {
  cfg.validate();
  const std::vector<Sample> train = make_split(cfg.data, Split::kTrain);
  const std::vector<Sample> val = make_split(cfg.data, Split::kVal);

  TrainOutcome res;
  Rng rng(cfg.seed);
  init_model(res.store, cfg.model, rng);

  std::string log_text = format_log_header();
  std::string eval_text = "step\tmiou\n";
  const StepHook hook = [&](const StepLog& s) {
    log_text += format_log_line(s);
    if (progress != nullptr && (s.step % 100 == 0 || s.step == cfg.train.steps)) {
      *progress << "step " << s.step << " loss " << s.total << "\n";
    }
    if (cfg.train.eval_every > 0 && s.step % cfg.train.eval_every == 0 && s.step != cfg.train.steps) {
      const double m = evaluate_model(res.store, cfg.model, val).miou;
      res.evals.emplace_back(s.step, m);
      eval_text += eval_log_line(s.step, m);
      if (progress != nullptr) *progress << "step " << s.step << " val miou " << m << "\n";
    }
  };
  res.log = train_model(res.store, cfg, train, rng, hook);

  snap_to_storage(res.store);
  res.final_eval = evaluate_model(res.store, cfg.model, val);
  res.evals.emplace_back(cfg.train.steps, res.final_eval.miou);
  eval_text += eval_log_line(cfg.train.steps, res.final_eval.miou);

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    save_checkpoint(join(out_dir, "model.sgv"), res.store, &rng, run_config_text(cfg));
    // Zero steps: the initial checkpoint only.
    if (cfg.train.steps > 0) {
      write_file(join(out_dir, "train_log.tsv"), log_text);
      write_file(join(out_dir, "eval_log.tsv"), eval_text);
      write_file(join(out_dir, "eval.txt"), format_eval(res.final_eval));
    }
  }
  return res;
}

LoadedModel load_model(const std::string& checkpoint_path) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ck.config.empty()) {
    throw IoError("checkpoint '" + checkpoint_path + "' has no config sidecar");
  }
  LoadedModel m{parse_run_config(ck.config), std::move(ck.store)};
  ParamStore expected;
  Rng rng(0);
  init_model(expected, m.cfg.model, rng);
  for (const auto& [name, p] : expected.entries()) {
    const auto it = m.store.entries().find(name);
    if (it == m.store.entries().end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (it->second.value.shape() != p.value.shape()) {
      throw FormatError("checkpoint: tensor '" + name + "' has the wrong shape");
    }
  }
  if (m.store.entries().size() != expected.entries().size()) {
    throw FormatError("checkpoint: unexpected tensors for this model");
  }
  return m;
}

ClOutcome run_continual(const RunConfig& cfg, const std::string& out_dir, std::ostream* progress) {
  cfg.validate();
  const std::vector<TaskSpec>& tasks = cfg.cl.tasks;
  if (tasks.empty()) throw ContractViolation("continual: no tasks configured");
  const std::size_t steps = cfg.cl.steps_per_task > 0 ? cfg.cl.steps_per_task : cfg.train.steps;
  const std::vector<Sample> train = make_split(cfg.data, Split::kTrain);
  const std::vector<Sample> val = make_split(cfg.data, Split::kVal);
  const auto groups = task_groups(tasks);
  if (!out_dir.empty()) ensure_dir(out_dir);

  Rng rng(cfg.seed);
  ClOutcome res;
  res.model = make_cl_model(cfg.model, rng);
  CLModel& model = res.model;

  const std::vector<Sample> pinned(val.begin(), val.begin() + std::min<std::size_t>(8, val.size()));
  res.pinned_batch = pinned.size();
  std::vector<double> head_one_after_task1;
  std::uint64_t checksum_after_task2 = 0;
  std::string log_text = "task\t" + format_log_header();
  std::string eval_text = "step\ttask\tmiou\n";

  for (std::size_t t = 1; t <= tasks.size(); ++t) {
    grow_task_head(model, tasks[t - 1], rng);
    if (t == 2) checksum_after_task2 = model.frozen_checksum;
    const SampleLoss loss = [&model, t](Binder& bind, const Sample& s) {
      const CLOutput out = cl_forward(bind, model, image_to_tensor(s.image), t);
      return cl_task_loss(out, s.labels, model, t);
    };
    const StepHook hook = [&](const StepLog& s) {
      log_text += std::to_string(t) + "\t" + format_log_line(s);
      if (progress != nullptr && (s.step % 100 == 0 || s.step == steps)) {
        *progress << "task " << t << " step " << s.step << " loss " << s.total << "\n";
      }
    };
    train_steps(model.store, cfg.train, steps, train, loss, rng, hook);
    snap_to_storage(model.store);
    if (t > 1) verify_frozen(model);

    const std::vector<Sample> seen = relabel(val, tasks, t);
    const EvalReport r = evaluate([&](const Tensor& img) { return cl_predict(model, img, t); }, seen,
                                  cfg.model.num_classes, {groups.begin(), groups.begin() + t});
    for (std::size_t g = 0; g < t; ++g) {
      res.history.push_back({t, g + 1, 100.0 * r.grouped->groups[g]});
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu\t%zu\t%.4f\n", t, g + 1, 100.0 * r.grouped->groups[g]);
      eval_text += buf;
    }
    if (progress != nullptr) *progress << "after task " << t << " miou " << r.miou << "\n";

    if (!out_dir.empty()) {
      save_checkpoint(join(out_dir, "task" + std::to_string(t) + ".sgv"), model.store, &rng,
                      run_config_text(cfg));
    }
    if (t == 1) head_one_after_task1 = head_one_outputs(model, pinned);
  }

  // Head 1 as reloaded from its own checkpoint must match the final model.
  std::vector<double> reference = head_one_after_task1;
  if (!out_dir.empty()) {
    Checkpoint ck = load_checkpoint(join(out_dir, "task1.sgv"));
    CLModel reloaded;
    reloaded.cfg = model.cfg;
    reloaded.store = std::move(ck.store);
    reloaded.heads.push_back(model.heads.front());
    reference = head_one_outputs(reloaded, pinned);
  }
  const std::vector<double> final_head_one = head_one_outputs(model, pinned);
  res.head_outputs_identical = reference == final_head_one && head_one_after_task1 == reference;
  for (std::size_t i = 0; i < std::min(reference.size(), final_head_one.size()); ++i) {
    res.raw_output_drift = std::max(res.raw_output_drift, std::abs(reference[i] - final_head_one[i]));
  }
  if (reference.size() != final_head_one.size()) res.raw_output_drift = std::numeric_limits<double>::infinity();
  res.frozen_checksums_equal =
      tasks.size() < 2 || model.store.checksum(model.frozen_names()) == model.frozen_checksum;
  if (tasks.size() >= 2) {
    // Names frozen at task 2 must still hash to the same value.
    std::vector<std::string> at_two;
    for (const std::string& n : model.store.frozen_names()) {
      if (n.rfind("task", 0) != 0 || n.rfind("task1.", 0) == 0) at_two.push_back(n);
    }
    res.frozen_checksums_equal =
        res.frozen_checksums_equal && model.store.checksum(at_two) == checksum_after_task2;
  }
  res.forgetting = forgetting_report(res.history);

  if (!out_dir.empty()) {
    write_file(join(out_dir, "cl_log.tsv"), log_text);
    write_file(join(out_dir, "cl_eval.tsv"), eval_text);
    write_file(join(out_dir, "forgetting.txt"), forgetting_table(res.forgetting));
    std::string report;
    report += "tasks\t" + std::to_string(tasks.size()) + "\n";
    report += "pinned_batch\t" + std::to_string(res.pinned_batch) + "\n";
    char drift[64];
    std::snprintf(drift, sizeof drift, "raw_output_drift\t%.17g\n", res.raw_output_drift);
    report += drift;
    report += std::string("head1_outputs_identical\t") + (res.head_outputs_identical ? "yes" : "no") + "\n";
    report += std::string("frozen_checksums_equal\t") + (res.frozen_checksums_equal ? "yes" : "no") + "\n";
    write_file(join(out_dir, "cl_report.txt"), report);
  }
  return res;
}

}  // namespace segvit

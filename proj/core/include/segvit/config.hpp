#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "segvit/continual.hpp"
#include "segvit/dataset.hpp"
#include "segvit/model.hpp"

namespace segvit {

struct TrainConfig {
  double lr = 0.003;
  double momentum = 0.9;
  std::size_t steps = 1000;
  std::size_t batch_size = 4;
  std::size_t decay_every = 0;  // 0 disables step decay
  double decay_factor = 0.1;
  std::size_t eval_every = 0;   // 0: evaluate only at the end
  bool augment = false;         // random flips and resize-crops
  double grad_clip = 0.0;       // global L2 norm bound, 0 disables

  void validate() const;
};

struct ClConfig {
  std::vector<TaskSpec> tasks;
  std::size_t steps_per_task = 0;  // 0: train.steps
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  DatasetSpec data;
  TrainConfig train;
  ClConfig cl;

  void validate() const;
};

// Toy defaults: P=8, C=64, depth 4, heads 4, taps 2,3,4 on 64x64 images
// with 5 classes.
RunConfig default_run_config();

// Line-based "key = value"; '#' starts a comment; keys carry dotted
// section prefixes. Unknown keys and malformed values raise ConfigError.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line)
      : std::runtime_error("config line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Applies the settings in `text` on top of `base`, then validates.
RunConfig parse_run_config(const std::string& text, RunConfig base = default_run_config());
RunConfig load_run_config(const std::string& path);

// Canonical form: every key, sorted; parses back to the same config.
std::string run_config_text(const RunConfig& cfg);
std::string dataset_spec_text(const DatasetSpec& spec);
std::vector<std::string> config_keys();

}  // namespace segvit

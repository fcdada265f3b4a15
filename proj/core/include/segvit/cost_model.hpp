#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "segvit/encoder.hpp"
#include "segvit/shrunk.hpp"
#include "segvit/token_schedule.hpp"

// Analytic multiply-accumulate counts. One MAC is reported as one FLOP.
namespace segvit {

enum class CostHead { kNone, kAtm, kSetrNaive };

struct ArchPreset {
  std::string name;
  EncoderConfig encoder;
  ShrunkConfig shrunk;
  CostHead head = CostHead::kAtm;
  std::size_t num_classes = 150;
  double rho = 1.0;  // retained token fraction for Shrunk++
  bool include_upsample = true;
  std::optional<double> reference_gflops;  // published total, when known
  std::string reference_note;

  void validate() const;
  std::size_t retained_tokens() const;  // round(rho * L) for Shrunk++, else L
};

struct CostComponent {
  std::string name;
  std::uint64_t macs = 0;
};

struct CostReport {
  std::string preset;
  std::vector<CostComponent> components;

  std::uint64_t total() const;
  std::uint64_t get(const std::string& name) const;  // 0 when absent
  void add(const std::string& name, std::uint64_t macs);
  void append(const CostReport& other);
};

// MACs of one attention layer: projections, scores, weighted sum, output
// projection and MLP.
struct StepCost {
  std::uint64_t qkv = 0;
  std::uint64_t matrix = 0;
  std::uint64_t proj = 0;
  std::uint64_t mlp = 0;
  std::uint64_t total() const { return qkv + matrix + proj + mlp; }
};
StepCost step_macs(const ScheduleStep& step, std::size_t width, double mlp_ratio);

// Attention layers executed by the encoder variant, in execution order.
// `retained` is the Shrunk++ retained token count (ignored otherwise).
TokenSchedule token_schedule(const EncoderConfig& enc, const ShrunkConfig& cfg,
                             std::size_t retained = 0);

// Dense encoder, ignoring the variant.
CostReport count_encoder_macs(const ArchPreset& preset);
CostReport count_atm_head_macs(const ArchPreset& preset);
CostReport count_setr_head_macs(const ArchPreset& preset);
// Encoder following the variant's schedule plus the configured head.
CostReport count_variant_macs(const ArchPreset& preset);

// Smallest rho whose Shrunk++ total reaches `target_macs` (bisection).
double fit_rho(ArchPreset preset, double target_macs);

std::vector<std::string> preset_names();
ArchPreset preset_by_name(const std::string& name);

struct PublishedCost {
  std::string label;
  double gflops;
};
// Published reference numbers that are carried as annotations only.
std::vector<PublishedCost> published_annotations();

std::string report_tsv(const CostReport& report);
std::string report_json(const CostReport& report);

// Aligned table of totals, deltas and ratios against the first preset.
std::string compare_report(const std::vector<ArchPreset>& presets);
std::string compare_report_json(const std::vector<ArchPreset>& presets);

}  // namespace segvit

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace segvit {

enum class StepKind { kLayer, kQd, kQu };

/// One attention layer as seen by the cost model: how many query tokens
/// attend over how many key/value tokens.
struct ScheduleStep {
  StepKind kind = StepKind::kLayer;
  std::size_t queries = 0;
  std::size_t keys = 0;

  friend bool operator==(const ScheduleStep&, const ScheduleStep&) = default;
};

using TokenSchedule = std::vector<ScheduleStep>;

std::string step_kind_name(StepKind kind);
std::string schedule_str(const TokenSchedule& schedule);

}  // namespace segvit

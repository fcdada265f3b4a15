#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "segvit/labels.hpp"

namespace segvit {

/// Per-class intersection and union pixel counts. Mergeable across shards.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(std::size_t num_classes = 0);

  void accumulate(const LabelMap& pred, const LabelMap& gt);
  void merge(const ConfusionAccumulator& other);

  std::size_t num_classes() const noexcept { return intersection_.size(); }
  std::uint64_t intersection(std::size_t c) const { return intersection_.at(c); }
  std::uint64_t union_count(std::size_t c) const { return union_.at(c); }
  std::uint64_t gt_count(std::size_t c) const { return gt_.at(c); }

  // NaN when the class never appears in prediction or ground truth.
  double iou(std::size_t c) const;
  double miou() const;

  friend bool operator==(const ConfusionAccumulator&, const ConfusionAccumulator&) = default;

 private:
  std::vector<std::uint64_t> intersection_;
  std::vector<std::uint64_t> union_;
  std::vector<std::uint64_t> gt_;
};

inline ConfusionAccumulator accumulate_confusion(const LabelMap& pred, const LabelMap& gt,
                                                 ConfusionAccumulator acc) {
  acc.accumulate(pred, gt);
  return acc;
}

struct GroupedMiou {
  std::vector<double> groups;  // NaN for a group with no counted class
  double overall = 0.0;        // over the union of all groups
};

GroupedMiou grouped_miou(const ConfusionAccumulator& acc,
                         const std::vector<std::vector<std::size_t>>& groups);

}  // namespace segvit

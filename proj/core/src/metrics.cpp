#include "segvit/metrics.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "segvit/errors.hpp"

namespace segvit {

ConfusionAccumulator::ConfusionAccumulator(std::size_t n)
    : intersection_(n, 0), union_(n, 0), gt_(n, 0) {}

void ConfusionAccumulator::accumulate(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ContractViolation("accumulate_confusion: prediction " + std::to_string(pred.height) +
                            "x" + std::to_string(pred.width) + " vs ground truth " +
                            std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  const std::size_t n = num_classes();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::uint8_t g = gt.labels[i];
    if (g == kIgnoreLabel) continue;
    const std::uint8_t p = pred.labels[i];
    if (g >= n || p >= n) {
      throw DataError("accumulate_confusion: label out of range at pixel " + std::to_string(i));
    }
    ++gt_[g];
    if (p == g) {
      ++intersection_[g];
      ++union_[g];
    } else {
      ++union_[g];
      ++union_[p];
    }
  }
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.num_classes() != num_classes()) {
    throw ContractViolation("confusion merge: class counts differ");
  }
  for (std::size_t c = 0; c < num_classes(); ++c) {
    intersection_[c] += other.intersection_[c];
    union_[c] += other.union_[c];
    gt_[c] += other.gt_[c];
  }
}

double ConfusionAccumulator::iou(std::size_t c) const {
  if (union_.at(c) == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(intersection_[c]) / static_cast<double>(union_[c]);
}

double ConfusionAccumulator::miou() const {
  std::vector<std::size_t> all(num_classes());
  for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
  return grouped_miou(*this, {all}).overall;
}

namespace {

double mean_iou(const ConfusionAccumulator& acc, const std::vector<std::size_t>& classes) {
  double s = 0.0;
  std::size_t k = 0;
  for (std::size_t c : classes) {
    const double v = acc.iou(c);
    if (std::isnan(v)) continue;
    s += v;
    ++k;
  }
  return k == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(k);
}

}  // namespace

GroupedMiou grouped_miou(const ConfusionAccumulator& acc,
                         const std::vector<std::vector<std::size_t>>& groups) {
  std::set<std::size_t> seen;
  std::vector<std::size_t> all;
  GroupedMiou out;
  for (const auto& g : groups) {
    for (std::size_t c : g) {
      if (c >= acc.num_classes()) {
        throw ContractViolation("grouped_miou: class " + std::to_string(c) + " out of range");
      }
      if (!seen.insert(c).second) {
        throw ContractViolation("grouped_miou: class " + std::to_string(c) +
                                " appears in two groups");
      }
      all.push_back(c);
    }
    out.groups.push_back(mean_iou(acc, g));
  }
  out.overall = mean_iou(acc, all);
  return out;
}

}  // namespace segvit

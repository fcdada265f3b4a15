#include "segvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "segvit/errors.hpp"

namespace segvit {

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(numel_of(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel_of(shape_) != data_.size()) {
    throw ContractViolation("tensor: shape " + shape_str(shape_) + " needs " +
                            std::to_string(numel_of(shape_)) +
                            " elements, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw BoundsError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                      shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::offset_of(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ContractViolation("tensor: index rank " + std::to_string(index.size()) +
                            " does not match shape " + shape_str(shape_));
  }
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) {
      throw BoundsError("tensor: index " + std::to_string(i) + " out of range on axis " +
                        std::to_string(axis) + " of " + shape_str(shape_));
    }
    offset = offset * shape_[axis] + i;
    ++axis;
  }
  return offset;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset_of(index)]; }

double Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[offset_of(index)];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractViolation("tensor: item() on shape " + shape_str(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel_of(shape) != data_.size()) {
    throw ContractViolation("reshape: cannot view " + shape_str(shape_) + " as " +
                            shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         (a.numel() == 0 ||
          std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ContractViolation("max_abs_diff: shapes " + shape_str(a.shape()) + " and " +
                            shape_str(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

}  // namespace segvit

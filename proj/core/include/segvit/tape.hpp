#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "segvit/tensor.hpp"

namespace segvit {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape is alive.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of one backward pass, keyed by leaf.
class GradientMap {
 public:
  const Tensor* find(const Var& leaf) const;
  const Tensor& at(const Var& leaf) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Append-only record of primitive applications. Confined to one thread.
class Tape {
 public:
  // Receives the gradient of the node's output; pushes contributions into
  // inputs through `accumulate`.
  using Backward = std::function<void(Tape&, const Tensor& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records an op result. The backward closure is stored only if some
  // input requires a gradient.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             Backward backward);
  Var record(std::string_view op, Tensor value, const std::vector<Var>& inputs,
             Backward backward);

  void accumulate(const Var& target, const Tensor& grad);
  void accumulate(const Var& target, Tensor&& grad);

  // Reverse-topological sweep from a scalar loss. One call per tape.
  GradientMap backward(const Var& loss);

  const Tensor& value(const Var& v) const;
  bool requires_grad(const Var& v) const;
  std::string_view op_name(const Var& v) const;
  std::vector<std::size_t> inputs_of(const Var& v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  bool backward_done() const noexcept { return backward_done_; }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool is_leaf = true;
    std::string_view op;
    std::vector<std::size_t> inputs;
    Backward backward;
  };

  void check_owned(const Var& v, std::string_view what) const;

  std::deque<Node> nodes_;
  std::vector<Tensor> grads_;
  bool backward_done_ = false;
  bool in_backward_ = false;
};

}  // namespace segvit

#include "segvit/tape.hpp"

#include <string>

#include "segvit/errors.hpp"

namespace segvit {

Tape& Var::tape() const {
  if (!tape_) throw ContractViolation("var: not on tape");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(*this); }

bool Var::requires_grad() const { return tape().requires_grad(*this); }

const Tensor* GradientMap::find(const Var& leaf) const {
  auto it = grads_.find(leaf.id());
  return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& GradientMap::at(const Var& leaf) const {
  const Tensor* g = find(leaf);
  if (!g) throw ContractViolation("gradients: leaf has no gradient");
  return *g;
}

void Tape::check_owned(const Var& v, std::string_view what) const {
  if (!v.valid() || v.tape_ != this || v.id_ >= nodes_.size()) {
    throw ContractViolation(std::string(what) + ": not on tape");
  }
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  node.op = "leaf";
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
                 Backward backward) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(std::string_view op, Tensor value, const std::vector<Var>& inputs,
                 Backward backward) {
  Node node;
  node.value = std::move(value);
  node.is_leaf = false;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in, op);
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& target, const Tensor& grad) {
  accumulate(target, Tensor(grad));
}

void Tape::accumulate(const Var& target, Tensor&& grad) {
  if (!in_backward_) throw ContractViolation("accumulate: only valid during backward");
  if (!nodes_[target.id_].requires_grad) return;
  Tensor& slot = grads_[target.id_];
  if (grad.shape() != nodes_[target.id_].value.shape()) {
    throw ContractViolation(std::string("accumulate: gradient shape ") + shape_str(grad.shape()) +
                            " does not match value " +
                            shape_str(nodes_[target.id_].value.shape()) + " of op " +
                            std::string(nodes_[target.id_].op));
  }
  if (slot.numel() == 0 && slot.shape().empty() && grad.numel() != 0) {
    slot = std::move(grad);
    return;
  }
  if (slot.shape() != grad.shape()) {
    slot = std::move(grad);
    return;
  }
  auto dst = slot.data();
  auto src = grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

GradientMap Tape::backward(const Var& loss) {
  check_owned(loss, "backward");
  if (backward_done_) throw ContractViolation("backward: already ran on this tape");
  const Node& root = nodes_[loss.id_];
  if (root.value.numel() != 1) {
    throw ContractViolation("backward: loss must be scalar, got shape " +
                            shape_str(root.value.shape()));
  }
  backward_done_ = true;
  grads_.assign(nodes_.size(), Tensor());
  in_backward_ = true;
  if (root.requires_grad) grads_[loss.id_] = Tensor(root.value.shape(), 1.0);

  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.is_leaf || !node.backward) continue;
    Tensor& g = grads_[id];
    if (g.numel() == 0 && node.value.numel() != 0) continue;
    node.backward(*this, g);
    g = Tensor();
  }
  in_backward_ = false;

  GradientMap out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (!node.is_leaf || !node.requires_grad) continue;
    Tensor g = std::move(grads_[id]);
    if (g.numel() == 0 && node.value.numel() != 0) g = Tensor(node.value.shape(), 0.0);
    out.grads_.emplace(id, std::move(g));
  }
  grads_.clear();
  return out;
}

const Tensor& Tape::value(const Var& v) const {
  check_owned(v, "value");
  return nodes_[v.id_].value;
}

bool Tape::requires_grad(const Var& v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id_].requires_grad;
}

std::string_view Tape::op_name(const Var& v) const {
  check_owned(v, "op_name");
  return nodes_[v.id_].op;
}

std::vector<std::size_t> Tape::inputs_of(const Var& v) const {
  check_owned(v, "inputs_of");
  return nodes_[v.id_].inputs;
}

}  // namespace segvit

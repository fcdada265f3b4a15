#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "segvit/rng.hpp"
#include "segvit/tape.hpp"
#include "segvit/tensor.hpp"

namespace segvit {

struct Parameter {
  Tensor value;
  Tensor velocity;  // momentum buffer, same shape as value
  bool frozen = false;
};

/// Named, ordered parameter table. Iteration order is lexicographic by
/// name, which keeps checkpoints and checksums deterministic.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::map<std::string, Parameter>& entries() noexcept { return params_; }
  const std::map<std::string, Parameter>& entries() const noexcept { return params_; }

  std::size_t size() const noexcept { return params_.size(); }
  // Total scalar count, optionally restricted to names with a prefix.
  std::size_t scalar_count(const std::string& prefix = "") const;

  void set_frozen(const std::string& prefix, bool frozen);
  std::vector<std::string> trainable_names() const;
  std::vector<std::string> frozen_names() const;

  // FNV-1a over names and raw value bytes of the listed parameters.
  std::uint64_t checksum(const std::vector<std::string>& names) const;

 private:
  std::map<std::string, Parameter> params_;
};

/// Binds parameters onto a tape on first use. Frozen parameters enter the
/// tape as constants, so no gradient can reach them. With
/// `allow_grad == false` every parameter is bound as a constant (inference).
class Binder {
 public:
  Binder(Tape& tape, ParamStore& store, bool allow_grad = true)
      : tape_(tape), store_(store), allow_grad_(allow_grad) {}

  Var operator()(const std::string& name);
  Tape& tape() noexcept { return tape_; }
  ParamStore& store() noexcept { return store_; }
  const std::unordered_map<std::string, Var>& bound() const noexcept { return bound_; }

 private:
  Tape& tape_;
  ParamStore& store_;
  bool allow_grad_;
  std::unordered_map<std::string, Var> bound_;
};

// Initialization helpers (truncated-normal 0.02 weights, zero biases,
// unit norm gains).
Tensor trunc_normal(Shape shape, Rng& rng, double std = 0.02);
void init_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                 Rng& rng, bool bias = true);
void init_norm(ParamStore& store, const std::string& prefix, std::size_t width);

}  // namespace segvit

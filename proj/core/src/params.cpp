#include "segvit/params.hpp"

#include <cstring>

#include "segvit/errors.hpp"

namespace segvit {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name)) throw ContractViolation("params: duplicate parameter '" + name + "'");
  Parameter p;
  p.velocity = Tensor(init.shape(), 0.0);
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractViolation("params: unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractViolation("params: unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_)
    if (name.compare(0, prefix.size(), prefix) == 0) n += p.value.numel();
  return n;
}

void ParamStore::set_frozen(const std::string& prefix, bool frozen) {
  for (auto& [name, p] : params_)
    if (name.compare(0, prefix.size(), prefix) == 0) p.frozen = frozen;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_)
    if (!p.frozen) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::frozen_names() const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_)
    if (p.frozen) out.push_back(name);
  return out;
}

std::uint64_t ParamStore::checksum(const std::vector<std::string>& names) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const std::string& name : names) {
    const Parameter& p = at(name);
    feed(name.data(), name.size());
    feed(p.value.data().data(), p.value.numel() * sizeof(double));
  }
  return h;
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Parameter& p = store_.at(name);
  Var v = tape_.leaf(p.value, allow_grad_ && !p.frozen);
  bound_.emplace(name, v);
  return v;
}

Tensor trunc_normal(Shape shape, Rng& rng, double std) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.truncated_normal(std);
  return t;
}

void init_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                 Rng& rng, bool bias) {
  store.add(prefix + ".weight", trunc_normal({in, out}, rng));
  if (bias) store.add(prefix + ".bias", Tensor({out}, 0.0));
}

void init_norm(ParamStore& store, const std::string& prefix, std::size_t width) {
  store.add(prefix + ".gain", Tensor({width}, 1.0));
  store.add(prefix + ".bias", Tensor({width}, 0.0));
}

}  // namespace segvit

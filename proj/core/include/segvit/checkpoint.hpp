#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "segvit/params.hpp"
#include "segvit/rng.hpp"

// Container: "SGV2", u32 version, u32 tensor count, then per tensor u32
// name length, name bytes, u32 rank, u64 dims, f32 data. Little-endian.
namespace segvit {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kRngStateTensor = "meta.rng_state";

using NamedTensor = std::pair<std::string, Tensor>;

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

// Rounds every parameter to the f32 storage precision.
void snap_to_storage(ParamStore& store);

struct Checkpoint {
  ParamStore store;
  std::optional<Rng> rng;
  std::string config;  // sidecar echo, empty when absent
};

// Writes `path` and, when `config` is non-empty, `path + ".cfg"`.
void save_checkpoint(const std::string& path, const ParamStore& store, const Rng* rng = nullptr,
                     const std::string& config = "");
Checkpoint load_checkpoint(const std::string& path);

}  // namespace segvit

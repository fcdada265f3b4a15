#include "segvit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>

#include "segvit/errors.hpp"
#include "segvit/netpbm.hpp"

namespace segvit {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'G', 'V', '2'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated reading ") + what + " at byte " +
                        std::to_string(pos_));
    }
  }

  bool done() const { return pos_ == b_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

// Rng state as eight 16-bit chunks, each exact in f32.
Tensor rng_to_tensor(const Rng& rng) {
  Tensor t({8});
  const std::uint64_t words[2] = {rng.seed(), rng.counter()};
  for (std::size_t w = 0; w < 2; ++w) {
    for (std::size_t k = 0; k < 4; ++k) t[w * 4 + k] = static_cast<double>((words[w] >> (16 * k)) & 0xffff);
  }
  return t;
}

Rng rng_from_tensor(const Tensor& t) {
  if (t.shape() != Shape{8}) throw FormatError("checkpoint: malformed rng state");
  std::uint64_t words[2] = {0, 0};
  for (std::size_t w = 0; w < 2; ++w) {
    for (std::size_t k = 0; k < 4; ++k) {
      const double v = t[w * 4 + k];
      if (v < 0 || v > 65535 || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
        throw FormatError("checkpoint: malformed rng state");
      }
      words[w] |= static_cast<std::uint64_t>(v) << (16 * k);
    }
  }
  return Rng(words[0], words[1]);
}

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<float>(out, static_cast<float>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw FormatError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>("name length");
    std::string name = r.bytes(len, "name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("checkpoint: rank " + std::to_string(rank) + " of '" + name + "'");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint64_t>("dims");
      if (dim != 0 && numel > (bytes.size() / 4) / dim) {
        throw FormatError("checkpoint: tensor '" + name + "' larger than the file");
      }
      numel *= dim;
      shape.push_back(dim);
    }
    r.need(numel * 4, "tensor data");
    Tensor t(shape);
    for (std::size_t k = 0; k < numel; ++k) t[k] = static_cast<double>(r.get<float>("tensor data"));
    out.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes at " + std::to_string(r.pos()));
  return out;
}

void snap_to_storage(ParamStore& store) {
  for (auto& [name, p] : store.entries()) {
    for (double& v : p.value.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

void save_checkpoint(const std::string& path, const ParamStore& store, const Rng* rng,
                     const std::string& config) {
  std::vector<NamedTensor> tensors;
  for (const auto& [name, p] : store.entries()) tensors.emplace_back(name, p.value);
  if (rng != nullptr) tensors.emplace_back(kRngStateTensor, rng_to_tensor(*rng));
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  write_file(path, encode_checkpoint(tensors));
  if (!config.empty()) write_file(path + ".cfg", config);
}

Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint ck;
  for (auto& [name, t] : decode_checkpoint(read_file(path))) {
    if (name == kRngStateTensor) {
      ck.rng = rng_from_tensor(t);
    } else {
      ck.store.add(name, std::move(t));
    }
  }
  if (std::filesystem::exists(path + ".cfg")) ck.config = read_file(path + ".cfg");
  return ck;
}

}  // namespace segvit

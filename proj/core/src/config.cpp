#include "segvit/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "segvit/errors.hpp"
#include "segvit/netpbm.hpp"

namespace segvit {

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ContractViolation("train.lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractViolation("train.momentum must lie in [0, 1)");
  if (!(grad_clip >= 0.0)) throw ContractViolation("train.grad_clip must be >= 0");
  if (batch_size == 0) throw ContractViolation("train.batch_size must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw ContractViolation("train.decay_factor must lie in (0, 1]");
  }
}

void RunConfig::validate() const {
  model.validate();
  data.validate();
  train.validate();
  if (model.num_classes != data.num_classes) {
    throw ContractViolation("model.num_classes (" + std::to_string(model.num_classes) +
                            ") differs from data.num_classes (" + std::to_string(data.num_classes) + ")");
  }
  if (model.encoder.image_height != data.height || model.encoder.image_width != data.width) {
    throw ContractViolation("encoder image size differs from data image size");
  }
  std::set<std::size_t> seen;
  for (std::size_t t = 0; t < cl.tasks.size(); ++t) {
    if (cl.tasks[t].task_id != t + 1) throw ContractViolation("cl.tasks: ids must run 1, 2, ...");
    for (std::size_t c : cl.tasks[t].class_ids) {
      if (c >= data.num_classes) {
        throw ContractViolation("cl.tasks: class " + std::to_string(c) + " not covered by the dataset");
      }
      if (!seen.insert(c).second) {
        throw ContractViolation("cl.tasks: class " + std::to_string(c) + " in two tasks");
      }
    }
  }
}

RunConfig default_run_config() {
  RunConfig c;
  c.model.encoder = EncoderConfig{};
  c.model.num_classes = 5;
  c.data.num_classes = 5;
  return c;
}

namespace {

struct BadValue {
  std::string what;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw BadValue{"expected a non-negative integer, got '" + v + "'"};
  }
  return x;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

double to_double(const std::string& v) {
  double x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw BadValue{"expected a number, got '" + v + "'"};
  }
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw BadValue{"expected true or false, got '" + v + "'"};
}

std::vector<std::size_t> to_list(const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  for (const std::string& part : split(v, ',')) out.push_back(to_size(part));
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}
std::string fmt(std::size_t x) { return std::to_string(x); }
std::string fmt(std::uint64_t x, int) { return std::to_string(x); }
std::string fmt(bool b) { return b ? "true" : "false"; }

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<Color> to_palette(const std::string& v) {
  std::vector<Color> out;
  if (v.empty()) return out;
  for (const std::string& c : split(v, ';')) {
    const auto rgb = to_list(c);
    if (rgb.size() != 3 || rgb[0] > 255 || rgb[1] > 255 || rgb[2] > 255) {
      throw BadValue{"palette entries are r,g,b with values in 0..255"};
    }
    out.push_back({static_cast<std::uint8_t>(rgb[0]), static_cast<std::uint8_t>(rgb[1]),
                   static_cast<std::uint8_t>(rgb[2])});
  }
  return out;
}

std::string fmt_palette(const std::vector<Color>& p) {
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    s += (i ? ";" : "") + std::to_string(p[i][0]) + "," + std::to_string(p[i][1]) + "," +
         std::to_string(p[i][2]);
  }
  return s;
}

// "0,1,2,3 | 4,5": task t owns the t-th group.
std::vector<TaskSpec> to_tasks(const std::string& v) {
  std::vector<TaskSpec> out;
  if (v.empty()) return out;
  for (const std::string& group : split(v, '|')) {
    out.push_back({out.size() + 1, to_list(group)});
    if (out.back().class_ids.empty()) throw BadValue{"empty task in cl.tasks"};
  }
  return out;
}

std::string fmt_tasks(const std::vector<TaskSpec>& tasks) {
  std::string s;
  for (std::size_t i = 0; i < tasks.size(); ++i) s += (i ? "|" : "") + fmt_list(tasks[i].class_ids);
  return s;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SEGVIT_FIELD(key, member, parse, format)                                 \
  {                                                                              \
    key, Field {                                                                 \
      [](RunConfig& c, const std::string& v) { c.member = parse(v); },           \
          [](const RunConfig& c) { return format(c.member); }                    \
    }                                                                            \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      SEGVIT_FIELD("seed", seed, to_u64, [](std::uint64_t x) { return fmt(x, 0); }),
      SEGVIT_FIELD("encoder.patch_size", model.encoder.patch_size, to_size, fmt),
      SEGVIT_FIELD("encoder.width", model.encoder.width, to_size, fmt),
      SEGVIT_FIELD("encoder.depth", model.encoder.depth, to_size, fmt),
      SEGVIT_FIELD("encoder.heads", model.encoder.heads, to_size, fmt),
      SEGVIT_FIELD("encoder.mlp_ratio", model.encoder.mlp_ratio, to_double, fmt),
      SEGVIT_FIELD("encoder.image_height", model.encoder.image_height, to_size, fmt),
      SEGVIT_FIELD("encoder.image_width", model.encoder.image_width, to_size, fmt),
      SEGVIT_FIELD("encoder.taps", model.encoder.tap_layers, to_list, fmt_list),
      SEGVIT_FIELD("model.variant", model.shrunk.variant, parse_variant, variant_name),
      SEGVIT_FIELD("model.head", model.head, parse_head, head_name),
      SEGVIT_FIELD("model.num_classes", model.num_classes, to_size, fmt),
      SEGVIT_FIELD("shrunk.qd_layer", model.shrunk.qd_layer, to_size, fmt),
      SEGVIT_FIELD("shrunk.qd_stride", model.shrunk.qd_stride, to_size, fmt),
      SEGVIT_FIELD("shrunk.high_res_store", model.shrunk.high_res_store, to_bool, fmt),
      SEGVIT_FIELD("shrunk.edge_threshold", model.shrunk.edge_threshold, to_double, fmt),
      SEGVIT_FIELD("loss.focal", model.loss.focal, to_double, fmt),
      SEGVIT_FIELD("loss.dice", model.loss.dice, to_double, fmt),
      SEGVIT_FIELD("loss.edge", model.loss.edge, to_double, fmt),
      SEGVIT_FIELD("loss.focal_gamma", model.loss.focal_gamma, to_double, fmt),
      SEGVIT_FIELD("loss.dice_smooth", model.loss.dice_smooth, to_double, fmt),
      SEGVIT_FIELD("loss.aux", model.loss.aux, to_double, fmt),
      SEGVIT_FIELD("data.seed", data.seed, to_u64, [](std::uint64_t x) { return fmt(x, 0); }),
      SEGVIT_FIELD("data.height", data.height, to_size, fmt),
      SEGVIT_FIELD("data.width", data.width, to_size, fmt),
      SEGVIT_FIELD("data.num_classes", data.num_classes, to_size, fmt),
      SEGVIT_FIELD("data.min_shapes", data.min_shapes, to_size, fmt),
      SEGVIT_FIELD("data.max_shapes", data.max_shapes, to_size, fmt),
      SEGVIT_FIELD("data.noise_std", data.noise_std, to_double, fmt),
      SEGVIT_FIELD("data.palette", data.palette, to_palette, fmt_palette),
      SEGVIT_FIELD("data.train_size", data.train_size, to_size, fmt),
      SEGVIT_FIELD("data.val_size", data.val_size, to_size, fmt),
      SEGVIT_FIELD("train.lr", train.lr, to_double, fmt),
      SEGVIT_FIELD("train.momentum", train.momentum, to_double, fmt),
      SEGVIT_FIELD("train.steps", train.steps, to_size, fmt),
      SEGVIT_FIELD("train.batch_size", train.batch_size, to_size, fmt),
      SEGVIT_FIELD("train.decay_every", train.decay_every, to_size, fmt),
      SEGVIT_FIELD("train.decay_factor", train.decay_factor, to_double, fmt),
      SEGVIT_FIELD("train.eval_every", train.eval_every, to_size, fmt),
      SEGVIT_FIELD("train.augment", train.augment, to_bool, fmt),
      SEGVIT_FIELD("train.grad_clip", train.grad_clip, to_double, fmt),
      SEGVIT_FIELD("cl.tasks", cl.tasks, to_tasks, fmt_tasks),
      SEGVIT_FIELD("cl.steps_per_task", cl.steps_per_task, to_size, fmt),
  };
  return table;
}

#undef SEGVIT_FIELD

}  // namespace

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  std::set<std::string> assigned;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown key '" + key + "'", line_no);
    if (!assigned.insert(key).second) throw ConfigError("duplicate key '" + key + "'", line_no);
    try {
      it->second.set(base, value);
    } catch (const BadValue& e) {
      throw ConfigError(key + ": " + e.what, line_no);
    } catch (const ContractViolation& e) {
      throw ConfigError(key + ": " + e.what(), line_no);
    }
  }
  base.validate();
  return base;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_file(path)); }

std::string run_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + " = " + f.get(cfg) + "\n";
  return out;
}

std::string dataset_spec_text(const DatasetSpec& spec) {
  RunConfig c;
  c.data = spec;
  std::string out;
  for (const auto& [key, f] : fields()) {
    if (key.rfind("data.", 0) == 0) out += key + " = " + f.get(c) + "\n";
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, f] : fields()) keys.push_back(key);
  return keys;
}

}  // namespace segvit

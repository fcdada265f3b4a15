#include "segvit/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "segvit/errors.hpp"

namespace segvit {

namespace {

using u64 = std::uint64_t;

u64 hidden_width(std::size_t width, double mlp_ratio) {
  return static_cast<u64>(std::llround(mlp_ratio * static_cast<double>(width)));
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left = true) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

}  // namespace

void ArchPreset::validate() const {
  encoder.validate();
  shrunk.validate(encoder);
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw ContractViolation("cost model: rho must lie in (0, 1], got " + std::to_string(rho));
  }
}

std::size_t ArchPreset::retained_tokens() const {
  if (shrunk.variant != Variant::kShrunkPP) return encoder.tokens();
  const auto r = static_cast<std::size_t>(std::llround(rho * static_cast<double>(encoder.tokens())));
  return std::max<std::size_t>(r, 1);
}

u64 CostReport::total() const {
  u64 t = 0;
  for (const CostComponent& c : components) t += c.macs;
  return t;
}

u64 CostReport::get(const std::string& name) const {
  for (const CostComponent& c : components) {
    if (c.name == name) return c.macs;
  }
  return 0;
}

void CostReport::add(const std::string& name, u64 macs) {
  for (CostComponent& c : components) {
    if (c.name == name) {
      c.macs += macs;
      return;
    }
  }
  components.push_back({name, macs});
}

void CostReport::append(const CostReport& other) {
  for (const CostComponent& c : other.components) add(c.name, c.macs);
}

StepCost step_macs(const ScheduleStep& s, std::size_t width, double mlp_ratio) {
  const u64 q = s.queries, k = s.keys, c = width;
  StepCost out;
  out.qkv = q * c * c + 2 * k * c * c;
  out.matrix = 2 * q * k * c;
  out.proj = q * c * c;
  out.mlp = 2 * q * c * hidden_width(width, mlp_ratio);
  return out;
}

TokenSchedule token_schedule(const EncoderConfig& enc, const ShrunkConfig& cfg,
                             std::size_t retained) {
  enc.validate();
  cfg.validate(enc);
  const std::size_t full = enc.tokens();
  TokenSchedule s;
  auto is_tap = [&](std::size_t i) {
    return std::find(enc.tap_layers.begin(), enc.tap_layers.end(), i) != enc.tap_layers.end();
  };
  switch (cfg.variant) {
    case Variant::kSingle:
      for (std::size_t i = 1; i <= enc.depth; ++i) s.push_back({StepKind::kLayer, full, full});
      break;
    case Variant::kShrunk: {
      const bool active = cfg.qd_stride > 1;
      const std::size_t low = full / (cfg.qd_stride * cfg.qd_stride);
      std::size_t cur = full;
      for (std::size_t i = 1; i <= enc.depth; ++i) {
        if (i == cfg.qd_layer + 1) {
          if (active && cfg.high_res_store) s.push_back({StepKind::kQu, full, cur});
          s.push_back({StepKind::kQd, low, cur});
          cur = low;
        } else {
          s.push_back({StepKind::kLayer, cur, cur});
        }
        if (is_tap(i) && i > cfg.qd_layer && active) s.push_back({StepKind::kQu, full, cur});
      }
      break;
    }
    case Variant::kShrunkPP: {
      if (retained == 0 || retained > full) {
        throw ContractViolation("token_schedule: retained count " + std::to_string(retained) +
                                " outside [1, " + std::to_string(full) + "]");
      }
      for (std::size_t i = 1; i <= enc.depth; ++i) {
        s.push_back({StepKind::kLayer, retained, retained});
        if (is_tap(i)) s.push_back({StepKind::kQu, full, retained});
      }
      break;
    }
  }
  return s;
}

namespace {

void add_patch_embed(CostReport& r, const EncoderConfig& e) {
  r.add("patch_embed", static_cast<u64>(e.tokens()) * e.width * e.patch_dim());
}

void add_schedule(CostReport& r, const TokenSchedule& s, const EncoderConfig& e) {
  for (const ScheduleStep& step : s) {
    const StepCost c = step_macs(step, e.width, e.mlp_ratio);
    switch (step.kind) {
      case StepKind::kLayer:
        r.add("attn_qkv", c.qkv);
        r.add("attn_matrix", c.matrix);
        r.add("attn_proj", c.proj);
        r.add("mlp", c.mlp);
        break;
      case StepKind::kQd:
        r.add("qd", c.total());
        break;
      case StepKind::kQu:
        r.add("qu", c.total());
        break;
    }
  }
}

u64 upsample_macs(const ArchPreset& p) {
  return static_cast<u64>(p.num_classes) * p.encoder.image_height * p.encoder.image_width * 4;
}

}  // namespace

CostReport count_encoder_macs(const ArchPreset& preset) {
  preset.validate();
  CostReport r;
  r.preset = preset.name;
  add_patch_embed(r, preset.encoder);
  ShrunkConfig dense;
  add_schedule(r, token_schedule(preset.encoder, dense), preset.encoder);
  return r;
}

CostReport count_atm_head_macs(const ArchPreset& preset) {
  CostReport r;
  r.preset = preset.name;
  const u64 n = preset.num_classes;
  const u64 l = preset.encoder.tokens();
  const u64 c = preset.encoder.width;
  const u64 hidden = hidden_width(preset.encoder.width, preset.encoder.mlp_ratio);
  const u64 stages = preset.encoder.tap_layers.size();
  if (n == 0) {
    r.add("atm_head", 0);
    return r;
  }
  const u64 projections = (n + 2 * l) * c * c;
  const u64 similarity = n * l * c;
  const u64 attention = n * l * c + n * c * c;
  const u64 ffn = 2 * n * c * hidden;
  const u64 classifier = n * c * 2;
  r.add("atm_head", stages * (projections + similarity + attention + ffn + classifier));
  if (preset.include_upsample) r.add("head_upsample", upsample_macs(preset));
  return r;
}

CostReport count_setr_head_macs(const ArchPreset& preset) {
  CostReport r;
  r.preset = preset.name;
  const u64 l = preset.encoder.tokens();
  const u64 c = preset.encoder.width;
  const u64 mid = 256;
  r.add("setr_head", l * c * mid + l * mid * preset.num_classes);
  if (preset.include_upsample) r.add("head_upsample", upsample_macs(preset));
  return r;
}

CostReport count_variant_macs(const ArchPreset& preset) {
  preset.validate();
  const EncoderConfig& e = preset.encoder;
  CostReport r;
  r.preset = preset.name;
  add_patch_embed(r, e);
  if (preset.shrunk.variant == Variant::kShrunkPP) {
    const u64 l = e.tokens(), c = e.width;
    r.add("edge_head", l * (c * c + c * (c / 2) + (c / 2) * 2));
  }
  add_schedule(r, token_schedule(e, preset.shrunk, preset.retained_tokens()), e);
  switch (preset.head) {
    case CostHead::kNone:
      break;
    case CostHead::kAtm:
      r.append(count_atm_head_macs(preset));
      break;
    case CostHead::kSetrNaive:
      r.append(count_setr_head_macs(preset));
      break;
  }
  return r;
}

double fit_rho(ArchPreset preset, double target) {
  if (preset.shrunk.variant != Variant::kShrunkPP) {
    throw ContractViolation("fit_rho: preset is not shrunk_pp");
  }
  auto total_at = [&](double rho) {
    preset.rho = rho;
    return static_cast<double>(count_variant_macs(preset).total());
  };
  const double lo_total = total_at(1.0 / static_cast<double>(preset.encoder.tokens()));
  if (target <= lo_total) return 1.0 / static_cast<double>(preset.encoder.tokens());
  if (target >= total_at(1.0)) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (total_at(mid) >= target ? hi : lo) = mid;
  }
  return hi;
}

namespace {

EncoderConfig base_512() {
  EncoderConfig e;
  e.patch_size = 16;
  e.width = 768;
  e.depth = 12;
  e.heads = 12;
  e.mlp_ratio = 4.0;
  e.image_height = 512;
  e.image_width = 512;
  e.tap_layers = {6, 8, 12};
  return e;
}

EncoderConfig large_640() {
  EncoderConfig e;
  e.patch_size = 16;
  e.width = 1024;
  e.depth = 24;
  e.heads = 16;
  e.mlp_ratio = 4.0;
  e.image_height = 640;
  e.image_width = 640;
  e.tap_layers = {8, 16, 24};
  return e;
}

EncoderConfig toy() {
  EncoderConfig e;  // defaults are the toy configuration
  return e;
}

ArchPreset make(const std::string& name, EncoderConfig e, Variant v, std::size_t qd_layer,
                CostHead head, std::size_t classes) {
  ArchPreset p;
  p.name = name;
  p.encoder = std::move(e);
  p.shrunk.variant = v;
  p.shrunk.qd_layer = qd_layer;
  p.shrunk.qd_stride = 2;
  p.head = head;
  p.num_classes = classes;
  return p;
}

constexpr double kGiga = 1e9;

// Shrunk++ retained fraction, fitted once to the published base total.
double base_shrunkpp_rho() {
  static const double rho = [] {
    ArchPreset p = make("fit", base_512(), Variant::kShrunkPP, 0, CostHead::kAtm, 150);
    return fit_rho(p, 74.6 * kGiga);
  }();
  return rho;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"vit-base-512-single-setr",   "vit-base-512-single-atm", "vit-base-512-shrunk-atm",
          "vit-base-512-shrunkpp-atm",  "vit-large-640-single-atm", "vit-large-640-shrunk-atm",
          "vit-large-640-shrunkpp-atm", "toy-single-atm",          "toy-shrunk-atm",
          "toy-shrunkpp-atm"};
}

ArchPreset preset_by_name(const std::string& name) {
  ArchPreset p;
  if (name == "vit-base-512-single-setr") {
    p = make(name, base_512(), Variant::kSingle, 0, CostHead::kSetrNaive, 150);
    p.reference_gflops = 107.3;
    p.reference_note = "published Single + SETR total";
  } else if (name == "vit-base-512-single-atm") {
    p = make(name, base_512(), Variant::kSingle, 0, CostHead::kAtm, 150);
    p.reference_gflops = 115.8;
    p.reference_note = "published Single + ATM total";
  } else if (name == "vit-base-512-shrunk-atm") {
    p = make(name, base_512(), Variant::kShrunk, 6, CostHead::kAtm, 150);
    p.reference_gflops = 97.1;
    p.reference_note = "published Shrunk (QD at 6, 2x2) total";
  } else if (name == "vit-base-512-shrunkpp-atm") {
    p = make(name, base_512(), Variant::kShrunkPP, 0, CostHead::kAtm, 150);
    p.rho = base_shrunkpp_rho();
    p.reference_gflops = 74.6;
    p.reference_note = "published Shrunk++ total (rho fitted to it)";
  } else if (name == "vit-large-640-single-atm") {
    p = make(name, large_640(), Variant::kSingle, 0, CostHead::kAtm, 150);
    p.reference_gflops = 637.9;
    p.reference_note = "published large Single total";
  } else if (name == "vit-large-640-shrunk-atm") {
    p = make(name, large_640(), Variant::kShrunk, 8, CostHead::kAtm, 150);
    p.reference_gflops = 373.5;
    p.reference_note = "published large Shrunk total";
  } else if (name == "vit-large-640-shrunkpp-atm") {
    p = make(name, large_640(), Variant::kShrunkPP, 0, CostHead::kAtm, 150);
    p.rho = base_shrunkpp_rho();
    p.reference_gflops = 308.8;
    p.reference_note = "published large Shrunk++ total";
  } else if (name == "toy-single-atm") {
    p = make(name, toy(), Variant::kSingle, 0, CostHead::kAtm, 5);
  } else if (name == "toy-shrunk-atm") {
    p = make(name, toy(), Variant::kShrunk, 2, CostHead::kAtm, 5);
  } else if (name == "toy-shrunkpp-atm") {
    p = make(name, toy(), Variant::kShrunkPP, 0, CostHead::kAtm, 5);
    p.rho = 0.5;
  } else {
    throw ContractViolation("unknown preset '" + name + "'");
  }
  return p;
}

std::vector<PublishedCost> published_annotations() {
  return {{"ATM head, base 512 (head only)", 6.89}, {"UPerNet head, base 512 (head only)", 336.62}};
}

std::string report_tsv(const CostReport& report) {
  std::ostringstream os;
  const double total = static_cast<double>(report.total());
  os << "name\tmacs\tshare\n";
  for (const CostComponent& c : report.components) {
    const double share = total > 0 ? static_cast<double>(c.macs) / total : 0.0;
    os << c.name << '\t' << c.macs << '\t' << fixed(share, 6) << '\n';
  }
  os << "total\t" << report.total() << '\t' << fixed(total > 0 ? 1.0 : 0.0, 6) << '\n';
  return os.str();
}

namespace {

nlohmann::ordered_json report_object(const CostReport& report) {
  nlohmann::ordered_json j;
  j["preset"] = report.preset;
  const double total = static_cast<double>(report.total());
  nlohmann::ordered_json comps = nlohmann::ordered_json::array();
  for (const CostComponent& c : report.components) {
    comps.push_back({{"name", c.name},
                     {"macs", c.macs},
                     {"share", total > 0 ? static_cast<double>(c.macs) / total : 0.0}});
  }
  j["components"] = comps;
  j["total"] = report.total();
  return j;
}

}  // namespace

std::string report_json(const CostReport& report) { return report_object(report).dump(2) + "\n"; }

std::string compare_report(const std::vector<ArchPreset>& presets) {
  if (presets.empty()) throw ContractViolation("compare_report: no presets");
  std::vector<CostReport> reports;
  for (const ArchPreset& p : presets) reports.push_back(count_variant_macs(p));
  const double base = static_cast<double>(reports.front().total());
  std::ostringstream os;
  os << pad("preset", 30) << pad("gmacs", 11, false) << pad("delta", 11, false)
     << pad("ratio", 8, false) << pad("published", 11, false) << pad("rel_err", 9, false) << '\n';
  for (std::size_t i = 0; i < presets.size(); ++i) {
    const double t = static_cast<double>(reports[i].total());
    std::string ref = "-", err = "-";
    if (presets[i].reference_gflops) {
      ref = fixed(*presets[i].reference_gflops, 2);
      err = fixed((t / kGiga - *presets[i].reference_gflops) / *presets[i].reference_gflops, 4);
    }
    os << pad(presets[i].name, 30) << pad(fixed(t / kGiga, 3), 11, false)
       << pad(fixed((t - base) / kGiga, 3), 11, false) << pad(fixed(base > 0 ? t / base : 0.0, 4), 8, false)
       << pad(ref, 11, false) << pad(err, 9, false) << '\n';
  }
  return os.str();
}

std::string compare_report_json(const std::vector<ArchPreset>& presets) {
  if (presets.empty()) throw ContractViolation("compare_report: no presets");
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  double base = 0.0;
  for (std::size_t i = 0; i < presets.size(); ++i) {
    CostReport r = count_variant_macs(presets[i]);
    const double t = static_cast<double>(r.total());
    if (i == 0) base = t;
    nlohmann::ordered_json row = report_object(r);
    row["ratio"] = base > 0 ? t / base : 0.0;
    if (presets[i].reference_gflops) row["published_gflops"] = *presets[i].reference_gflops;
    if (presets[i].shrunk.variant == Variant::kShrunkPP) row["rho"] = presets[i].rho;
    rows.push_back(row);
  }
  nlohmann::ordered_json j;
  j["presets"] = rows;
  nlohmann::ordered_json notes = nlohmann::ordered_json::array();
  for (const PublishedCost& p : published_annotations()) {
    notes.push_back({{"label", p.label}, {"gflops", p.gflops}});
  }
  j["annotations"] = notes;
  return j.dump(2) + "\n";
}

}  // namespace segvit

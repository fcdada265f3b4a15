#include <gtest/gtest.h>

#include "json.hpp"
#include "schedule_check.hpp"
#include "segvit/cost_model.hpp"
#include "segvit/errors.hpp"

namespace segvit {
namespace {

// Closed-form dense layer: 12 L C^2 + 2 L^2 C with an MLP ratio of 4.
double dense_layer(double l, double c) { return 12.0 * l * c * c + 2.0 * l * l * c; }

TEST(CostModel, DenseEncoderMatchesClosedForm) {
  ArchPreset p = preset_by_name("vit-base-512-single-atm");
  const double l = 1024, c = 768;
  const double expected = 12 * dense_layer(l, c) + l * c * 768;
  EXPECT_EQ(static_cast<double>(count_encoder_macs(p).total()), expected);
}

TEST(CostModel, AtmHeadMatchesSpreadsheet) {
  ArchPreset p = preset_by_name("vit-base-512-single-atm");
  const double n = 150, l = 1024, c = 768;
  const double stage = (n + 2 * l) * c * c + 2 * n * l * c + n * c * c + 8 * n * c * c + 2 * n * c;
  const CostReport r = count_atm_head_macs(p);
  EXPECT_EQ(static_cast<double>(r.get("atm_head")), 3 * stage);
  EXPECT_EQ(static_cast<double>(r.get("head_upsample")), n * 512 * 512 * 4);
  p.include_upsample = false;
  EXPECT_EQ(count_atm_head_macs(p).get("head_upsample"), 0u);
}

TEST(CostModel, SingleIsEncoderPlusHead) {
  for (const char* name : {"vit-base-512-single-atm", "vit-base-512-single-setr",
                           "vit-large-640-single-atm", "toy-single-atm"}) {
    ArchPreset p = preset_by_name(name);
    const std::uint64_t head = p.head == CostHead::kAtm ? count_atm_head_macs(p).total()
                                                         : count_setr_head_macs(p).total();
    EXPECT_EQ(count_variant_macs(p).total(), count_encoder_macs(p).total() + head) << name;
  }
}

TEST(CostModel, ShrunkBaseComponents) {
  ArchPreset p = preset_by_name("vit-base-512-shrunk-atm");
  p.head = CostHead::kNone;
  const double l = 1024, c = 768, low = 256;
  const double qd = 10 * low * c * c + 2 * l * c * c + 2 * low * l * c;
  const double qu = [&](double q, double k) { return 10 * q * c * c + 2 * k * c * c + 2 * q * k * c; }(l, l);
  const double restore = 10 * l * c * c + 2 * low * c * c + 2 * l * low * c;
  const double expected = l * c * 768 + 6 * dense_layer(l, c) + qu + qd + 5 * dense_layer(low, c) +
                          2 * restore;
  const CostReport r = count_variant_macs(p);
  EXPECT_EQ(static_cast<double>(r.total()), expected);
  EXPECT_EQ(static_cast<double>(r.get("qd")), qd);
  EXPECT_EQ(static_cast<double>(r.get("qu")), qu + 2 * restore);
}

TEST(CostModel, PublishedBands) {
  auto within = [](const std::string& name, double band) {
    ArchPreset p = preset_by_name(name);
    const double g = static_cast<double>(count_variant_macs(p).total()) / 1e9;
    return std::abs(g - *p.reference_gflops) <= band * *p.reference_gflops;
  };
  EXPECT_TRUE(within("vit-base-512-single-setr", 0.15));
  EXPECT_TRUE(within("vit-base-512-single-atm", 0.15));
  EXPECT_TRUE(within("vit-base-512-shrunk-atm", 0.15));
  EXPECT_TRUE(within("vit-base-512-shrunkpp-atm", 0.01));
  const ArchPreset base = preset_by_name("vit-base-512-single-atm");
  for (bool up : {true, false}) {
    ArchPreset p = base;
    p.include_upsample = up;
    const double g = static_cast<double>(count_atm_head_macs(p).total()) / 1e9;
    EXPECT_NEAR(g, 6.89, 0.15 * 6.89);
  }
  const double ratio =
      static_cast<double>(count_variant_macs(preset_by_name("vit-large-640-shrunkpp-atm")).total()) /
      static_cast<double>(count_variant_macs(preset_by_name("vit-large-640-single-atm")).total());
  EXPECT_NEAR(ratio, 308.8 / 637.9, 0.07);
}

TEST(CostModel, MonotoneInRhoAndStride) {
  ArchPreset pp = preset_by_name("vit-base-512-shrunkpp-atm");
  std::uint64_t prev = 0;
  for (double rho : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    pp.rho = rho;
    const std::uint64_t t = count_variant_macs(pp).total();
    EXPECT_GT(t, prev);
    prev = t;
  }
  ArchPreset s = preset_by_name("vit-base-512-shrunk-atm");
  s.encoder.image_height = s.encoder.image_width = 384;  // 24x24 grid, divisible by 1, 2, 3
  std::uint64_t last = UINT64_MAX;
  for (std::size_t stride : {2, 3}) {
    s.shrunk.qd_stride = stride;
    const std::uint64_t t = count_variant_macs(s).total();
    EXPECT_LT(t, last);
    last = t;
  }
}

TEST(CostModel, FitRhoHitsTarget) {
  ArchPreset p = preset_by_name("vit-base-512-shrunkpp-atm");
  const double rho = fit_rho(p, 74.6e9);
  EXPECT_GT(rho, 0.3);
  EXPECT_LT(rho, 0.6);
  p.rho = rho;
  EXPECT_NEAR(static_cast<double>(count_variant_macs(p).total()) / 1e9, 74.6, 0.1);
  EXPECT_THROW(fit_rho(preset_by_name("vit-base-512-shrunk-atm"), 1e9), ContractViolation);
}

TEST(CostModel, ScheduleShapes) {
  EncoderConfig e;
  e.image_height = e.image_width = 32;
  e.patch_size = 4;
  ShrunkConfig c;
  c.variant = Variant::kShrunk;
  c.qd_layer = 2;
  const TokenSchedule s = token_schedule(e, c);
  EXPECT_EQ(schedule_str(s), "layer(64x64) layer(64x64) qu(64x64) qd(16x64) qu(64x16) layer(16x16) qu(64x16)");
  c.variant = Variant::kShrunkPP;
  c.qd_layer = 0;
  EXPECT_EQ(token_schedule(e, c, 20).size(), 4u + 3u);
  EXPECT_THROW(token_schedule(e, c, 0), ContractViolation);
  EXPECT_THROW(token_schedule(e, c, 65), ContractViolation);
}

TEST(CostModel, ScheduleMatchesExecutable) {
  for (const auto& sc : testing::schedule_cases()) {
    const testing::ScheduleCheck r = testing::check_schedule(sc.cfg, 11);
    EXPECT_TRUE(r.equal) << sc.label << "\n executed " << schedule_str(r.executed) << "\n analytic "
                         << schedule_str(r.analytic);
  }
}

TEST(CostModel, ReportsAndPresets) {
  EXPECT_THROW(preset_by_name("nope"), ContractViolation);
  for (const std::string& n : preset_names()) EXPECT_NO_THROW(count_variant_macs(preset_by_name(n)));
  const CostReport r = count_variant_macs(preset_by_name("toy-shrunk-atm"));
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j["total"].get<std::uint64_t>(), r.total());
  EXPECT_NE(report_tsv(r).find("total\t" + std::to_string(r.total())), std::string::npos);
  const std::string table = compare_report({preset_by_name("vit-base-512-single-atm"),
                                            preset_by_name("vit-base-512-shrunk-atm")});
  EXPECT_NE(table.find("vit-base-512-shrunk-atm"), std::string::npos);
  const auto cj = nlohmann::json::parse(compare_report_json({preset_by_name("toy-single-atm")}));
  EXPECT_EQ(cj["presets"].size(), 1u);
  ArchPreset bad = preset_by_name("toy-shrunkpp-atm");
  bad.rho = 0.0;
  EXPECT_THROW(count_variant_macs(bad), ContractViolation);
}

}  // namespace
}  // namespace segvit

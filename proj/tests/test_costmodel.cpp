#include <gtest/gtest.h>

#include <filesystem>

#include "test_util.hpp"

using namespace bismo;
using namespace bismo::cost;
using bismo::testing::error_kind_of;

TEST(Cost, DpuLuts) {
  EXPECT_NEAR(dpu_luts(256), 343.62, 1e-9);
  EXPECT_NEAR(legacy_dpu_luts(256), 2.04 * 256 + 109, 1e-9);
  EXPECT_LT(dpu_luts_per_op(1024), dpu_luts_per_op(32));
}

TEST(Cost, BaseOnlyWithEmptyArray) {
  HwConfig cfg;
  cfg.dm = cfg.dn = 0;
  CostReport r;
  CostConstants c;
  lut_cost(cfg, c, r);
  EXPECT_DOUBLE_EQ(r.lut_total, c.lut_base_fr + c.lut_base_p2s);
  c.include_p2s = false;
  lut_cost(cfg, c, r);
  EXPECT_DOUBLE_EQ(r.lut_total, c.lut_base_fr);
}

TEST(Cost, ArrayScalesWithDpuCount) {
  HwConfig a, b;
  a.dm = a.dn = 4;
  b.dm = 8;
  b.dn = 4;
  const auto ra = estimate(a), rb = estimate(b);
  EXPECT_NEAR(rb.lut_array, 2 * ra.lut_array, 1e-9);
  EXPECT_NEAR(ra.lut_array, 16 * (dpu_luts(a.dk) + CostConstants{}.lut_res), 1e-9);
}

TEST(Cost, MeasuredBramCounts) {
  const std::vector<unsigned> expect{65, 97, 129, 81, 145, 97, 161};
  const auto& ms = measured_instances();
  ASSERT_EQ(ms.size(), expect.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    EXPECT_DOUBLE_EQ(bram_total(config_of(ms[i])), expect[i]) << i;
    EXPECT_EQ(ms[i].brams, expect[i]);
  }
}

TEST(Cost, MeasuredGops) {
  for (const auto& m : measured_instances())
    EXPECT_NEAR(peak_gops(config_of(m)) / m.gops, 1.0, 5e-4) << m.dm << "x" << m.dk << "x" << m.dn;
}

TEST(Cost, PeakAt300MHz) {
  HwConfig cfg;
  cfg.dm = cfg.dn = 8;
  cfg.dk = 256;
  cfg.f_clk = 300e6;
  EXPECT_NEAR(peak_gops(cfg), 9830.4, 1e-6);
  EXPECT_EQ(peak_ops_per_cycle(cfg), 32768u);
}

TEST(Cost, BramDepthScaling) {
  HwConfig cfg;
  cfg.dm = cfg.dn = 2;
  cfg.dk = 64;
  cfg.bm = cfg.bn = 1024;
  EXPECT_EQ(bram_array(cfg), 2u * 4);
  cfg.bm = 2048;
  EXPECT_EQ(bram_array(cfg), 2u * (2 * 2 + 2));
  cfg.dk = 32;
  cfg.bm = 1;
  EXPECT_EQ(bram_array(cfg), 4u);
}

TEST(Cost, PerOpSweepMonotone) {
  std::vector<HwConfig> cfgs;
  for (unsigned dk = 32; dk <= 1024; dk *= 2) {
    HwConfig c;
    c.dm = c.dn = 8;
    c.dk = dk;
    cfgs.push_back(c);
  }
  const auto rows = sweep(cfgs);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LT(rows[i].luts_per_op, rows[i - 1].luts_per_op);
    EXPECT_LT(dpu_luts_per_op(rows[i].cfg.dk), dpu_luts_per_op(rows[i - 1].cfg.dk));
    EXPECT_LT(dpu_luts_per_op(rows[i].cfg.dk), legacy_dpu_luts_per_op(rows[i].cfg.dk));
  }
}

TEST(Cost, GridSweep) {
  std::vector<HwConfig> cfgs;
  for (unsigned d : {2u, 4u, 8u})
    for (unsigned dk : {64u, 128u, 256u}) {
      HwConfig c;
      c.dm = c.dn = d;
      c.dk = dk;
      cfgs.push_back(c);
    }
  const auto rows = sweep(cfgs);
  ASSERT_EQ(rows.size(), 9u);
  for (const auto& r : rows) {
    EXPECT_GT(r.report.lut_total, r.report.lut_base);
    EXPECT_DOUBLE_EQ(r.luts_per_op, r.report.lut_total / r.report.peak_binary_ops_per_cycle);
  }
}

TEST(Cost, ConstantsFile) {
  const auto path = std::filesystem::temp_directory_path() / "bismo_cost_test.txt";
  io::write_text(path.string(), "# override\nalpha_dpu = 2\nbeta_dpu=10\ninclude_p2s=0\n");
  const auto c = load_constants(path.string());
  EXPECT_DOUBLE_EQ(dpu_luts(64, c), 138);
  EXPECT_FALSE(c.include_p2s);
  io::write_text(path.string(), "gamma=1\n");
  EXPECT_EQ(error_kind_of([&] { load_constants(path.string()); }), ErrorKind::Format);
  io::write_text(path.string(), "alpha_dpu=abc\n");
  EXPECT_EQ(error_kind_of([&] { load_constants(path.string()); }), ErrorKind::Format);
  io::write_text(path.string(), "alpha_dpu=-1\n");
  EXPECT_EQ(error_kind_of([&] { load_constants(path.string()); }), ErrorKind::Validation);
  std::filesystem::remove(path);
  EXPECT_EQ(error_kind_of([&] { load_constants(path.string()); }), ErrorKind::Io);
}

#pragma once

// Analytical LUT/BRAM cost and peak throughput of an overlay instance.

#include <cmath>
#include <cstdint>
#include <vector>

#include "bismo/hw_config.hpp"

namespace bismo::cost {

/// Fitted model constants. The legacy pair describes the original DPU with
/// a barrel shifter and is kept for comparison.
struct CostConstants {
  double alpha_dpu = 1.17;   // LUT per popcount bit
  double beta_dpu = 44.1;    // LUT per DPU
  double lut_res = 120.1;    // result path LUT per DPU
  double lut_base_fr = 718;  // fetch + result stages
  double lut_base_p2s = 929; // P2S converter at M = 8
  double bram_base = 1;
  double legacy_alpha = 2.04;
  double legacy_beta = 109;
  bool include_p2s = true;

  void set(const std::string& key, double v) {
    if (v < 0) fail(ErrorKind::Validation, "cost constant " + key + " must be >= 0");
    if (key == "alpha_dpu") alpha_dpu = v;
    else if (key == "beta_dpu") beta_dpu = v;
    else if (key == "lut_res") lut_res = v;
    else if (key == "lut_base_fr") lut_base_fr = v;
    else if (key == "lut_base_p2s") lut_base_p2s = v;
    else if (key == "bram_base") bram_base = v;
    else if (key == "legacy_alpha") legacy_alpha = v;
    else if (key == "legacy_beta") legacy_beta = v;
    else if (key == "include_p2s") include_p2s = v != 0;
    else fail(ErrorKind::Format, "unknown cost constant '" + key + "'");
  }
};

inline CostConstants load_constants(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open cost constants file " + path);
  CostConstants c;
  for (const auto& [k, v] : parse_key_values(in, path)) {
    try {
      c.set(k, std::stod(v));
    } catch (const std::invalid_argument&) {
      fail(ErrorKind::Format, path + ": bad number for " + k);
    }
  }
  return c;
}

struct CostReport {
  double lut_dpu = 0;
  double lut_array = 0;
  double lut_base = 0;
  double lut_total = 0;
  std::uint64_t bram_array = 0;
  double bram_total = 0;
  std::uint64_t peak_binary_ops_per_cycle = 0;
  double peak_gops = 0;
};

inline double dpu_luts(unsigned dk, const CostConstants& c = {}) {
  return c.alpha_dpu * dk + c.beta_dpu;
}

inline double legacy_dpu_luts(unsigned dk, const CostConstants& c = {}) {
  return c.legacy_alpha * dk + c.legacy_beta;
}

/// LUTs per binary op of a single DPU (2*Dk ops per cycle).
inline double dpu_luts_per_op(unsigned dk, const CostConstants& c = {}) {
  return dpu_luts(dk, c) / (2.0 * dk);
}

inline double legacy_dpu_luts_per_op(unsigned dk, const CostConstants& c = {}) {
  return legacy_dpu_luts(dk, c) / (2.0 * dk);
}

/// Dm and Dn may be zero here to probe the size-independent base.
inline void lut_cost(const HwConfig& cfg, const CostConstants& c, CostReport& out) {
  out.lut_dpu = dpu_luts(cfg.dk, c);
  out.lut_array = double(cfg.dm) * cfg.dn * (out.lut_dpu + c.lut_res);
  out.lut_base = c.lut_base_fr + (c.include_p2s ? c.lut_base_p2s : 0.0);
  out.lut_total = out.lut_base + out.lut_array;
}

/// Input matrix buffers in 32-of-36-bit-wide, 1024-deep BRAMs.
inline std::uint64_t bram_array(const HwConfig& cfg) {
  const std::uint64_t width = ceil_div(cfg.dk, 32);
  return width * (std::uint64_t{cfg.dm} * ceil_div(cfg.bm, 1024) +
                  std::uint64_t{cfg.dn} * ceil_div(cfg.bn, 1024));
}

inline double bram_total(const HwConfig& cfg, const CostConstants& c = {}) {
  return c.bram_base + static_cast<double>(bram_array(cfg));
}

inline std::uint64_t peak_ops_per_cycle(const HwConfig& cfg) {
  return 2ull * cfg.dm * cfg.dn * cfg.dk;
}

/// Peak binary GOPS at cfg.f_clk.
inline double peak_gops(const HwConfig& cfg) {
  return static_cast<double>(peak_ops_per_cycle(cfg)) * cfg.f_clk / 1e9;
}

inline CostReport estimate(const HwConfig& cfg, const CostConstants& c = {}) {
  CostReport r;
  lut_cost(cfg, c, r);
  r.bram_array = bram_array(cfg);
  r.bram_total = bram_total(cfg, c);
  r.peak_binary_ops_per_cycle = peak_ops_per_cycle(cfg);
  r.peak_gops = peak_gops(cfg);
  return r;
}

struct SweepRow {
  HwConfig cfg;
  CostReport report;
  double luts_per_op = 0;  // total LUTs per peak binary op per cycle
};

inline std::vector<SweepRow> sweep(const std::vector<HwConfig>& configs,
                                   const CostConstants& c = {}) {
  std::vector<SweepRow> rows;
  rows.reserve(configs.size());
  for (const auto& cfg : configs) {
    SweepRow row{cfg, estimate(cfg, c), 0};
    row.luts_per_op = row.report.lut_total / static_cast<double>(row.report.peak_binary_ops_per_cycle);
    rows.push_back(row);
  }
  return rows;
}

/// A synthesized instance with measured resources, for model validation.
struct MeasuredInstance {
  unsigned dm, dk, dn;
  double luts;
  unsigned brams;
  double fmax_mhz;
  double gops;
};

/// Improved-overlay instances measured on the ZU3EG (F = R = 64).
inline const std::vector<MeasuredInstance>& measured_instances() {
  static const std::vector<MeasuredInstance> v{
      {4, 256, 4, 12657, 65, 313.19, 2565.6},     {8, 256, 4, 19613, 97, 323.31, 5297.1},
      {8, 256, 8, 33418, 129, 309.89, 10154.3},   {10, 128, 10, 34252, 81, 306.84, 7855.2},
      {12, 256, 6, 36879, 145, 302.39, 11147.3},  {12, 128, 12, 46847, 97, 281.85, 10390.1},
      {10, 256, 10, 50734, 161, 311.53, 15950.2},
  };
  return v;
}

inline HwConfig config_of(const MeasuredInstance& m, unsigned depth = 1024) {
  HwConfig cfg;
  cfg.dm = m.dm;
  cfg.dk = m.dk;
  cfg.dn = m.dn;
  cfg.bm = depth;
  cfg.bn = depth;
  cfg.f_clk = m.fmax_mhz * 1e6;
  return cfg;
}

}  // namespace bismo::cost

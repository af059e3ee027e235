#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "bismo/bitmatrix.hpp"
#include "bismo/compressor.hpp"
#include "bismo/error.hpp"

namespace bismo {

/// Cycles the execute pipeline adds on top of the compressor tree: operand
/// buffer read, AND stage, shift/negate and result hand-off. Fitted once so
/// that the single-pass execute efficiency at K = 8192 lands on 0.68
/// (Dk = 256) and 0.82 (Dk = 128).
inline constexpr unsigned kExecuteOverheadCycles = 7;

/// DMA request latency fitted to the overlapped 256x4096x256 binary run on
/// an 8x64x8 instance (121,896 modeled vs 121,133 measured cycles). The
/// library default stays at 16.
inline constexpr unsigned kFittedDmaLatency = 72;

/// Overlay instance parameters.
struct HwConfig {
  unsigned dm = 2;               // DPU rows
  unsigned dn = 2;               // DPU columns
  unsigned dk = 64;              // popcount width in bits
  unsigned bm = 1024;            // LHS buffer depth (Dk-bit entries)
  unsigned bn = 1024;            // RHS buffer depth
  unsigned br = 2;               // result buffer slots
  unsigned acc_bits = 32;        // A
  unsigned read_bus_bits = 64;   // F
  unsigned write_bus_bits = 64;  // R
  unsigned max_precision = 8;    // M
  double f_clk = 200e6;
  unsigned d_pipe = 0;  // 0: derive from the compressor depth
  unsigned dma_latency = 16;
  unsigned fifo_capacity = 16;
  bool pipelined_execute = false;

  unsigned execute_pipeline_depth() const {
    return d_pipe != 0 ? d_pipe
                       : static_cast<unsigned>(compressor::pipeline_depth(dk)) + kExecuteOverheadCycles;
  }

  unsigned lhs_buffers() const { return dm; }
  unsigned rhs_buffers() const { return dn; }
  unsigned buffer_count() const { return dm + dn; }
  unsigned word_bytes() const { return dk / 8; }
  unsigned acc_bytes() const { return acc_bits / 8; }

  /// Bytes per bit-parallel element read by the P2S converter.
  unsigned p2s_elem_bytes() const {
    unsigned b = 1;
    while (b * 8 < max_precision) b *= 2;
    return b;
  }

  LayoutParams layout() const { return {read_bus_bits, write_bus_bits, max_precision}; }

  void validate() const {
    auto positive = [](unsigned v, const char* name) {
      if (v == 0) fail(ErrorKind::Validation, std::string(name) + " must be positive");
    };
    positive(dm, "dm");
    positive(dn, "dn");
    positive(dk, "dk");
    positive(bm, "bm");
    positive(bn, "bn");
    positive(br, "br");
    positive(fifo_capacity, "fifo_capacity");
    if (dk % 32 != 0) fail(ErrorKind::Validation, "dk must be a multiple of 32");
    if (acc_bits < 8 || acc_bits > 64 || acc_bits % 8 != 0)
      fail(ErrorKind::Validation, "accumulator width must be 8, 16, ..., 64");
    if (!is_pow2(read_bus_bits) || read_bus_bits < 8)
      fail(ErrorKind::Validation, "read bus width must be a power of two >= 8");
    if (!is_pow2(write_bus_bits) || write_bus_bits < 8)
      fail(ErrorKind::Validation, "write bus width must be a power of two >= 8");
    if (max_precision < 1 || max_precision > kMaxBits)
      fail(ErrorKind::Validation, "max precision must be in 1..64");
    if (!(f_clk > 0)) fail(ErrorKind::Validation, "clock frequency must be positive");
  }

  /// Applies one `key=value` setting.
  void set(const std::string& key, const std::string& value) {
    auto as_uint = [&]() -> unsigned {
      try {
        std::size_t pos = 0;
        const unsigned long v = std::stoul(value, &pos, 0);
        if (pos != value.size()) throw std::invalid_argument(value);
        return static_cast<unsigned>(v);
      } catch (const std::exception&) {
        fail(ErrorKind::Format, "bad value for " + key + ": '" + value + "'");
      }
    };
    if (key == "dm") dm = as_uint();
    else if (key == "dn") dn = as_uint();
    else if (key == "dk") dk = as_uint();
    else if (key == "bm") bm = as_uint();
    else if (key == "bn") bn = as_uint();
    else if (key == "br") br = as_uint();
    else if (key == "a" || key == "acc_bits") acc_bits = as_uint();
    else if (key == "f" || key == "read_bus_bits") read_bus_bits = as_uint();
    else if (key == "r" || key == "write_bus_bits") write_bus_bits = as_uint();
    else if (key == "m" || key == "max_precision") max_precision = as_uint();
    else if (key == "d_pipe") d_pipe = as_uint();
    else if (key == "dma_latency") dma_latency = as_uint();
    else if (key == "fifo_capacity") fifo_capacity = as_uint();
    else if (key == "pipelined_execute") pipelined_execute = as_uint() != 0;
    else if (key == "fclk" || key == "f_clk") {
      try {
        f_clk = std::stod(value);
      } catch (const std::exception&) {
        fail(ErrorKind::Format, "bad value for " + key + ": '" + value + "'");
      }
    } else {
      fail(ErrorKind::Format, "unknown configuration key '" + key + "'");
    }
  }

  /// Every key accepted by set(), in canonical spelling.
  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k{"dm", "dn", "dk", "bm", "bn", "br", "a", "f", "r", "m",
                                            "fclk", "d_pipe", "dma_latency", "fifo_capacity",
                                            "pipelined_execute"};
    return k;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "dm=" << dm << "\ndn=" << dn << "\ndk=" << dk << "\nbm=" << bm << "\nbn=" << bn
       << "\nbr=" << br << "\na=" << acc_bits << "\nf=" << read_bus_bits << "\nr=" << write_bus_bits
       << "\nm=" << max_precision << "\nfclk=" << f_clk << "\nd_pipe=" << d_pipe
       << "\ndma_latency=" << dma_latency << "\nfifo_capacity=" << fifo_capacity
       << "\npipelined_execute=" << (pipelined_execute ? 1 : 0) << "\n";
    return os.str();
  }
};

/// Parses `key=value` lines; `#` starts a comment.
inline std::map<std::string, std::string> parse_key_values(std::istream& in,
                                                           const std::string& source) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Format, source + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline void apply_config_file(HwConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config file " + path);
  for (const auto& [k, v] : parse_key_values(in, path)) cfg.set(k, v);
}

/// BISMO_<KEY> environment variables, e.g. BISMO_DK=128.
inline void apply_env_overrides(HwConfig& cfg) {
  for (const auto& key : HwConfig::keys()) {
    std::string name = "BISMO_";
    for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(name.c_str())) cfg.set(key, v);
  }
}

}  // namespace bismo

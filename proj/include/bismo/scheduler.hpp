#pragma once

// Program generation for arbitrary bit-serial matrix products: operand
// layout in main memory, block tiling, wavefront ordering, buffer slot
// management and fetch/execute/result token placement.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "bismo/bitmatrix.hpp"
#include "bismo/hw_config.hpp"
#include "bismo/isa.hpp"
#include "bismo/memory.hpp"
#include "bismo/refgemm.hpp"
#include "bismo/simulator.hpp"

namespace bismo {

/// P = L (rows x depth, lhs_bits) * R (depth x cols, rhs_bits).
struct GemmShape {
  std::uint64_t rows = 1;
  std::uint64_t depth = 1;
  std::uint64_t cols = 1;
  unsigned lhs_bits = 1;
  unsigned rhs_bits = 1;
  bool lhs_signed = false;
  bool rhs_signed = false;

  static GemmShape of(const BitParallelMatrix& l, const BitParallelMatrix& r) {
    if (l.cols() != r.rows())
      fail(ErrorKind::Dimension, "inner dimensions differ: " + std::to_string(l.cols()) + " vs " +
                                     std::to_string(r.rows()));
    return {l.rows(), l.cols(), r.cols(), l.bits(), r.bits(), l.is_signed(), r.is_signed()};
  }
};

/// Placement of the padded bit-serial operands and the tiled result.
/// L planes are stored Mp x Kp, R is stored transposed as Np x Kp, both
/// plane-major with Kp / 8 bytes per row. Result tiles of Dm x Dn
/// accumulators (A / 8 bytes each, row-major) follow in row-major tile order.
struct MemoryLayout {
  GemmShape shape;
  std::uint64_t m_pad = 0, k_pad = 0, n_pad = 0;
  std::uint64_t k_words = 0;  // Dk-bit words per operand row
  std::uint64_t row_bytes = 0;
  std::uint64_t lhs_base = 0, rhs_base = 0, result_base = 0;
  std::uint64_t tiles_m = 0, tiles_n = 0;
  std::uint64_t tile_bytes = 0;
  std::uint64_t total_bytes = 0;
  unsigned dm = 1, dn = 1, acc_bits = 32;

  std::uint64_t lhs_bytes() const { return shape.lhs_bits * m_pad * row_bytes; }
  std::uint64_t rhs_bytes() const { return shape.rhs_bits * n_pad * row_bytes; }
  std::uint64_t result_bytes() const { return tiles_m * tiles_n * tile_bytes; }
};

inline MemoryLayout make_layout(const GemmShape& s, const HwConfig& cfg, std::uint64_t base = 0) {
  cfg.validate();
  if (s.rows == 0 || s.depth == 0 || s.cols == 0)
    fail(ErrorKind::Dimension, "matrix dimensions must be positive");
  if (s.lhs_bits == 0 || s.rhs_bits == 0 || s.lhs_bits > kMaxBits || s.rhs_bits > kMaxBits)
    fail(ErrorKind::Unsupported, "operand precision must be 1..64");
  MemoryLayout L;
  L.shape = s;
  L.dm = cfg.dm;
  L.dn = cfg.dn;
  L.acc_bits = cfg.acc_bits;
  L.m_pad = round_up(s.rows, cfg.dm);
  L.n_pad = round_up(s.cols, cfg.dn);
  L.k_pad = round_up(s.depth, std::lcm<std::uint64_t>(cfg.dk, 64));
  L.k_words = L.k_pad / cfg.dk;
  L.row_bytes = L.k_pad / 8;
  L.tiles_m = L.m_pad / cfg.dm;
  L.tiles_n = L.n_pad / cfg.dn;
  L.tile_bytes = std::uint64_t{cfg.dm} * cfg.dn * cfg.acc_bytes();
  L.lhs_base = round_up(base, 64);
  L.rhs_base = round_up(L.lhs_base + L.lhs_bytes(), 64);
  L.result_base = round_up(L.rhs_base + L.rhs_bytes(), 64);
  L.total_bytes = L.result_base + L.result_bytes();
  return L;
}

/// Writes the padded bit-serial operands into memory.
inline void stage_operands(const BitParallelMatrix& lhs, const BitParallelMatrix& rhs,
                           const MemoryLayout& L, MemModel& mem) {
  const GemmShape s = GemmShape::of(lhs, rhs);
  if (s.rows != L.shape.rows || s.depth != L.shape.depth || s.cols != L.shape.cols ||
      s.lhs_bits != L.shape.lhs_bits || s.rhs_bits != L.shape.rhs_bits)
    fail(ErrorKind::Dimension, "operands do not match the memory layout");
  mem.write(L.lhs_base, pack_planes(lhs.padded(L.m_pad, L.k_pad), static_cast<unsigned>(L.k_pad)));
  mem.write(L.rhs_base,
            pack_planes(rhs.transposed().padded(L.n_pad, L.k_pad), static_cast<unsigned>(L.k_pad)));
}

/// Extracts the logical result matrix from the tiled result region.
inline AccumMatrix read_result(const MemModel& mem, const MemoryLayout& L) {
  AccumMatrix p(L.shape.rows, L.shape.cols, L.acc_bits);
  const unsigned nb = L.acc_bits / 8;
  for (std::uint64_t m = 0; m < L.shape.rows; ++m)
    for (std::uint64_t n = 0; n < L.shape.cols; ++n) {
      const std::uint64_t tile = (m / L.dm) * L.tiles_n + n / L.dn;
      const std::uint64_t addr =
          L.result_base + tile * L.tile_bytes + ((m % L.dm) * L.dn + n % L.dn) * nb;
      p(m, n) = mem.read_int(addr, nb);
    }
  return p;
}

struct ScheduleOptions {
  bool overlap = true;
  std::uint64_t chunk_words = 0;  // 0: derive from buffer depths
};

namespace sched_detail {

struct ExecOp {
  std::uint64_t tile_m, tile_n;
  WavefrontStep step;
  std::uint64_t chunk;
  bool last_of_tile;
  std::uint64_t tile_seq;  // commit index
};

struct FetchOp {
  bool rhs;
  unsigned plane;
  std::uint64_t block;
  std::uint64_t chunk;
  std::uint64_t slot;
  std::uint64_t need;    // first execute using the data
  std::int64_t e_free;   // execute that must finish first, -1 for none
};

struct Plan {
  std::uint64_t kc = 1, nchunks = 1;
  std::uint64_t group = 1;  // row tiles sharing one sweep over the column tiles
  std::vector<ExecOp> execs;
  std::vector<FetchOp> fetches;
  std::vector<std::uint64_t> lhs_slot, rhs_slot;  // per execute
};

using Key = std::tuple<unsigned, std::uint64_t, std::uint64_t>;  // plane, block, chunk

/// Belady replacement over `slots` buffer slots for one operand side.
inline void plan_side(const std::vector<Key>& uses, std::uint64_t slots, bool rhs, bool overlap,
                      std::vector<FetchOp>& fetches, std::vector<std::uint64_t>& slot_of) {
  const std::size_t n = uses.size();
  constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::uint64_t> next_use(n, kNever);
  std::map<Key, std::uint64_t> later;
  for (std::size_t e = n; e-- > 0;) {
    auto it = later.find(uses[e]);
    next_use[e] = it == later.end() ? kNever : it->second;
    later[uses[e]] = e;
  }
  struct Resident {
    bool valid = false;
    Key key;
    std::uint64_t next = 0;
    std::int64_t last = -1;
  };
  std::vector<Resident> res(slots);
  std::map<Key, std::uint64_t> where;
  slot_of.assign(n, 0);
  for (std::size_t e = 0; e < n; ++e) {
    const Key& k = uses[e];
    std::uint64_t s;
    if (auto it = where.find(k); it != where.end()) {
      s = it->second;
    } else {
      s = slots;
      for (std::uint64_t i = 0; i < slots; ++i)
        if (!res[i].valid) {
          s = i;
          break;
        }
      if (s == slots) {
        s = 0;
        for (std::uint64_t i = 1; i < slots; ++i)
          if (res[i].next > res[s].next) s = i;
      }
      std::int64_t e_free = res[s].valid ? res[s].last : -1;
      if (!overlap && e > 0) e_free = static_cast<std::int64_t>(e) - 1;
      if (res[s].valid) where.erase(res[s].key);
      fetches.push_back({rhs, std::get<0>(k), std::get<1>(k), std::get<2>(k), s, e, e_free});
      res[s].valid = true;
      res[s].key = k;
      where[k] = s;
    }
    res[s].next = next_use[e];
    res[s].last = static_cast<std::int64_t>(e);
    slot_of[e] = s;
  }
}

/// `split` reserves half of each buffer for the next chunk (double buffering).
inline Plan make_plan(const MemoryLayout& L, const HwConfig& cfg, const ScheduleOptions& opt,
                      bool split) {
  Plan P;
  const std::uint64_t depth = std::min(cfg.bm, cfg.bn);
  if (opt.chunk_words != 0) {
    if (opt.chunk_words > cfg.bm)
      fail(ErrorKind::Capacity, "chunk of " + std::to_string(opt.chunk_words) +
                                    " words exceeds the LHS buffer depth Bm=" +
                                    std::to_string(cfg.bm));
    if (opt.chunk_words > cfg.bn)
      fail(ErrorKind::Capacity, "chunk of " + std::to_string(opt.chunk_words) +
                                    " words exceeds the RHS buffer depth Bn=" +
                                    std::to_string(cfg.bn));
    P.kc = std::min(opt.chunk_words, L.k_words);
  } else {
    const std::uint64_t cap = split ? depth / 2 : depth;
    P.kc = std::min<std::uint64_t>(L.k_words, std::max<std::uint64_t>(1, cap));
  }
  P.nchunks = ceil_div(L.k_words, P.kc);
  const std::uint64_t slots_l = cfg.bm / P.kc, slots_r = cfg.bn / P.kc;

  const auto steps = wavefront_schedule(L.shape.lhs_bits, L.shape.rhs_bits, L.shape.lhs_signed,
                                        L.shape.rhs_signed);
  // Row tiles grouped so their LHS data can stay resident while sweeping
  // the column tiles; sweep direction alternates per group.
  const std::uint64_t per_row_tile = std::uint64_t{L.shape.lhs_bits} * P.nchunks;
  const std::uint64_t slots_eff = split ? slots_l / 2 : slots_l;
  const std::uint64_t group = std::max<std::uint64_t>(1, slots_eff / std::max<std::uint64_t>(1, per_row_tile));
  P.group = group;
  std::uint64_t seq = 0;
  for (std::uint64_t g0 = 0, gi = 0; g0 < L.tiles_m; g0 += group, ++gi) {
    const std::uint64_t g1 = std::min(L.tiles_m, g0 + group);
    for (std::uint64_t t = 0; t < L.tiles_n; ++t) {
      const std::uint64_t tn = gi % 2 == 0 ? t : L.tiles_n - 1 - t;
      for (std::uint64_t tm = g0; tm < g1; ++tm) {
        for (std::size_t si = 0; si < steps.size(); ++si)
          for (std::uint64_t c = 0; c < P.nchunks; ++c) {
            WavefrontStep st = steps[si];
            if (c != 0) st.acc_mode = AccMode::Keep;
            const bool last = si + 1 == steps.size() && c + 1 == P.nchunks;
            P.execs.push_back({tm, tn, st, c, last, seq});
          }
        ++seq;
      }
    }
  }

  std::vector<Key> luse, ruse;
  luse.reserve(P.execs.size());
  ruse.reserve(P.execs.size());
  for (const auto& e : P.execs) {
    luse.emplace_back(e.step.i, e.tile_m, e.chunk);
    ruse.emplace_back(e.step.j, e.tile_n, e.chunk);
  }
  std::vector<FetchOp> lf, rf;
  plan_side(luse, slots_l, false, opt.overlap, lf, P.lhs_slot);
  plan_side(ruse, slots_r, true, opt.overlap, rf, P.rhs_slot);
  // Merge by first use, LHS before RHS for the same execute.
  std::merge(lf.begin(), lf.end(), rf.begin(), rf.end(), std::back_inserter(P.fetches),
             [](const FetchOp& a, const FetchOp& b) {
               return std::tie(a.need, a.rhs) < std::tie(b.need, b.rhs);
             });
  return P;
}

inline isa::Program emit(const MemoryLayout& L, const HwConfig& cfg, const ScheduleOptions& opt,
                         const Plan& P) {
  using namespace isa;
  const std::uint64_t wb = cfg.word_bytes();
  const std::uint64_t commits = L.tiles_m * L.tiles_n;

  Program prog;
  std::vector<bool> exec_waits(P.execs.size(), false);
  std::vector<bool> exec_signals(P.execs.size(), false);

  std::int64_t waited = -1;
  for (std::size_t f = 0; f < P.fetches.size(); ++f) {
    const auto& fo = P.fetches[f];
    if (fo.e_free > waited) {
      prog.fetch.push_back(Wait{Stage::Fetch, Stage::Execute});
      exec_signals[fo.e_free] = true;
      waited = fo.e_free;
    }
    const std::uint64_t len = std::min(P.kc, L.k_words - fo.chunk * P.kc);
    RunFetch rf;
    const std::uint64_t rows_per_block = fo.rhs ? cfg.dn : cfg.dm;
    const std::uint64_t plane_rows = fo.rhs ? L.n_pad : L.m_pad;
    const std::uint64_t base = fo.rhs ? L.rhs_base : L.lhs_base;
    rf.dram_base = base + (fo.plane * plane_rows + fo.block * rows_per_block) * L.row_bytes +
                   fo.chunk * P.kc * wb;
    rf.block_size_bytes = len * wb;
    rf.block_offset_bytes = L.row_bytes;
    rf.block_count = rows_per_block;
    rf.buf_offset = fo.slot * P.kc;
    rf.buf_start = fo.rhs ? cfg.dm : 0;
    rf.buf_range = rows_per_block;
    rf.words_per_buffer = len;
    prog.fetch.push_back(rf);
    if (f + 1 == P.fetches.size() || P.fetches[f + 1].need != fo.need) {
      prog.fetch.push_back(Signal{Stage::Fetch, Stage::Execute});
      exec_waits[fo.need] = true;
    }
  }

  for (std::size_t e = 0; e < P.execs.size(); ++e) {
    const auto& eo = P.execs[e];
    if (exec_waits[e]) prog.execute.push_back(Wait{Stage::Execute, Stage::Fetch});
    RunExecute re;
    re.lhs_offset = P.lhs_slot[e] * P.kc;
    re.rhs_offset = P.rhs_slot[e] * P.kc;
    re.dot_length = std::min(P.kc, L.k_words - eo.chunk * P.kc);
    re.negate = eo.step.negate;
    re.acc = eo.step.acc_mode;
    prog.execute.push_back(re);
    if (eo.last_of_tile) {
      if (opt.overlap && eo.tile_seq >= cfg.br)
        prog.execute.push_back(Wait{Stage::Execute, Stage::Result});
      prog.execute.push_back(Signal{Stage::Execute, Stage::Result});
      if (!opt.overlap) prog.execute.push_back(Wait{Stage::Execute, Stage::Result});
    }
    if (exec_signals[e]) prog.execute.push_back(Signal{Stage::Execute, Stage::Fetch});
  }

  // Result offsets follow commit order.
  std::vector<std::uint64_t> tile_of_commit(commits);
  for (const auto& eo : P.execs)
    if (eo.last_of_tile) tile_of_commit[eo.tile_seq] = eo.tile_m * L.tiles_n + eo.tile_n;
  for (std::uint64_t d = 0; d < commits; ++d) {
    prog.result.push_back(Wait{Stage::Result, Stage::Execute});
    prog.result.push_back(RunResult{L.result_base, tile_of_commit[d] * L.tile_bytes});
    if (!opt.overlap || d + cfg.br < commits)
      prog.result.push_back(Signal{Stage::Result, Stage::Execute});
  }

  prog.meta["rows"] = std::to_string(L.shape.rows);
  prog.meta["depth"] = std::to_string(L.shape.depth);
  prog.meta["cols"] = std::to_string(L.shape.cols);
  prog.meta["lhs_bits"] = std::to_string(L.shape.lhs_bits);
  prog.meta["rhs_bits"] = std::to_string(L.shape.rhs_bits);
  prog.meta["lhs_signed"] = L.shape.lhs_signed ? "1" : "0";
  prog.meta["rhs_signed"] = L.shape.rhs_signed ? "1" : "0";
  prog.meta["lhs_base"] = std::to_string(L.lhs_base);
  prog.meta["rhs_base"] = std::to_string(L.rhs_base);
  prog.meta["result_base"] = std::to_string(L.result_base);
  prog.meta["memory_bytes"] = std::to_string(L.total_bytes);
  prog.meta["overlap"] = opt.overlap ? "1" : "0";
  return prog;
}

/// Sequential schedules use whole buffers. Overlapped ones try split
/// buffers and whole buffers and keep the faster: splitting enables
/// prefetch but can double the number of chunk fetches.
inline Plan choose_plan(const MemoryLayout& L, const HwConfig& cfg, const ScheduleOptions& opt) {
  if (!opt.overlap) return make_plan(L, cfg, opt, false);
  Plan split = make_plan(L, cfg, opt, true);
  Plan whole = make_plan(L, cfg, opt, false);
  if (split.kc == whole.kc && split.group == whole.group) return split;
  const auto ts = time_program(emit(L, cfg, opt, split), cfg).cycles_total;
  const auto tw = time_program(emit(L, cfg, opt, whole), cfg).cycles_total;
  return tw < ts ? whole : split;
}

inline void check_layout(const MemoryLayout& L, const HwConfig& cfg) {
  cfg.validate();
  if (L.dm != cfg.dm || L.dn != cfg.dn || L.acc_bits != cfg.acc_bits ||
      L.k_pad % std::lcm<std::uint64_t>(cfg.dk, 64) != 0)
    fail(ErrorKind::Validation, "memory layout was made for a different configuration");
}

}  // namespace sched_detail

/// Generates a program computing the product described by `L`. Operands
/// must have been placed with stage_operands().
inline isa::Program generate(const MemoryLayout& L, const HwConfig& cfg,
                             const ScheduleOptions& opt = {}) {
  sched_detail::check_layout(L, cfg);
  return sched_detail::emit(L, cfg, opt, sched_detail::choose_plan(L, cfg, opt));
}

inline isa::Program generate(const GemmShape& s, const HwConfig& cfg,
                             const ScheduleOptions& opt = {}) {
  return generate(make_layout(s, cfg), cfg, opt);
}

/// Rebuilds the layout recorded in a generated program's metadata.
inline MemoryLayout layout_from_meta(const isa::Program& p, const HwConfig& cfg) {
  auto get = [&](const char* k) -> std::uint64_t {
    auto it = p.meta.find(k);
    if (it == p.meta.end())
      fail(ErrorKind::Format, std::string("program metadata lacks '") + k + "'");
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      fail(ErrorKind::Format, std::string("bad program metadata '") + k + "'");
    }
  };
  GemmShape s{get("rows"), get("depth"), get("cols"),
              static_cast<unsigned>(get("lhs_bits")), static_cast<unsigned>(get("rhs_bits")),
              get("lhs_signed") != 0, get("rhs_signed") != 0};
  MemoryLayout L = make_layout(s, cfg, get("lhs_base"));
  if (L.rhs_base != get("rhs_base") || L.result_base != get("result_base"))
    fail(ErrorKind::Validation, "program metadata does not match this configuration");
  return L;
}

struct InstructionCounts {
  std::size_t fetch = 0, execute = 0, result = 0;
  friend bool operator==(const InstructionCounts&, const InstructionCounts&) = default;
};

inline InstructionCounts estimate_instruction_count(const GemmShape& s, const HwConfig& cfg,
                                                    const ScheduleOptions& opt = {}) {
  const auto L = make_layout(s, cfg);
  const auto P = sched_detail::choose_plan(L, cfg, opt);
  InstructionCounts c;
  std::int64_t waited = -1;
  std::size_t exec_signals = 0, exec_waits = 0;
  for (std::size_t f = 0; f < P.fetches.size(); ++f) {
    if (P.fetches[f].e_free > waited) {
      waited = P.fetches[f].e_free;
      ++c.fetch;
      ++exec_signals;
    }
    ++c.fetch;
    if (f + 1 == P.fetches.size() || P.fetches[f + 1].need != P.fetches[f].need) {
      ++c.fetch;
      ++exec_waits;
    }
  }
  const std::uint64_t commits = L.tiles_m * L.tiles_n;
  const std::uint64_t back = opt.overlap ? (commits > cfg.br ? commits - cfg.br : 0) : commits;
  c.execute = P.execs.size() + exec_signals + exec_waits + commits + back;
  c.result = 2 * commits + back;
  return c;
}

struct SimulatedGemm {
  AccumMatrix product;
  SimReport report;
  isa::Program program;
  MemoryLayout layout;
};

/// End-to-end: lay out, stage, schedule and simulate L * R.
inline SimulatedGemm gemm_simulated(const BitParallelMatrix& lhs, const BitParallelMatrix& rhs,
                                    const HwConfig& cfg, const ScheduleOptions& opt = {},
                                    SimOptions sim_opt = {}) {
  SimulatedGemm out;
  out.layout = make_layout(GemmShape::of(lhs, rhs), cfg);
  MemModel mem(out.layout.total_bytes);
  stage_operands(lhs, rhs, out.layout, mem);
  out.program = generate(out.layout, cfg, opt);
  out.report = run_timed(out.program, mem, cfg, sim_opt);
  out.product = read_result(mem, out.layout);
  return out;
}

}  // namespace bismo

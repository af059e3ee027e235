#pragma once

// Functional and cycle-approximate execution of overlay programs: three
// stages exchanging payload-free tokens over bounded FIFOs, matrix buffers,
// the DPU array, result slots and the P2S converter.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <deque>
#include <sstream>
#include <string>
#include <vector>

#include "bismo/hw_config.hpp"
#include "bismo/isa.hpp"
#include "bismo/memory.hpp"
#include "bismo/refgemm.hpp"

namespace bismo {

struct TraceEvent {
  isa::Stage stage;
  std::size_t index;  // position in the stage queue
  std::string kind;   // run, wait, signal
  std::uint64_t start;
  std::uint64_t end;
};

struct SimReport {
  std::uint64_t cycles_total = 0;
  std::array<std::uint64_t, 3> busy{};   // fetch, execute, result
  std::array<std::uint64_t, 3> stall{};  // cycles spent blocked on tokens
  std::array<std::uint64_t, 3> instructions{};
  std::uint64_t p2s_cycles = 0;
  std::uint64_t binary_ops = 0;
  std::uint64_t bytes_fetched = 0;
  std::uint64_t buffer_writes = 0;
  std::uint64_t result_bytes = 0;
  std::uint64_t unwritten_reads = 0;
  double gops = 0;
  double efficiency = 0;
  std::uint64_t hazard_count = 0;
  std::vector<std::string> hazards;  // first few, for diagnostics
  std::vector<TraceEvent> trace;

  std::string to_key_value() const {
    std::ostringstream os;
    os << "cycles_total=" << cycles_total << "\n"
       << "fetch_busy=" << busy[0] << "\nexecute_busy=" << busy[1] << "\nresult_busy=" << busy[2]
       << "\nfetch_stall=" << stall[0] << "\nexecute_stall=" << stall[1]
       << "\nresult_stall=" << stall[2] << "\np2s_cycles=" << p2s_cycles
       << "\nbinary_ops=" << binary_ops << "\nbytes_fetched=" << bytes_fetched
       << "\nbuffer_writes=" << buffer_writes << "\nresult_bytes=" << result_bytes
       << "\nunwritten_reads=" << unwritten_reads << "\ngops=" << gops
       << "\nefficiency=" << efficiency << "\nhazards=" << hazard_count << "\n";
    return os.str();
  }
};

struct SimOptions {
  bool record_trace = false;
  std::size_t max_hazard_messages = 32;
  bool timing_only = false;  // cycle accounting without touching memory or buffers
};

namespace detail {

inline constexpr int kStages = 3;
using VClock = std::array<std::uint64_t, kStages>;

inline void merge(VClock& a, const VClock& b) {
  for (int i = 0; i < kStages; ++i) a[i] = std::max(a[i], b[i]);
}

struct Token {
  std::uint64_t time;
  VClock clock;
};

struct Fifo {
  std::deque<Token> tokens;
  std::vector<std::uint64_t> pop_times;
  std::uint64_t pushes = 0;
};

struct WordMeta {
  std::uint64_t write_tick = 0;  // fetch tick of the last write, 0 = never
  std::uint64_t read_tick = 0;   // latest execute tick that read the word
};

struct ResultSlot {
  std::vector<std::int64_t> values;
  bool full = false;
  std::uint64_t commit_tick = 0;  // execute tick
  std::uint64_t drain_tick = 0;   // result tick
};

}  // namespace detail

inline std::uint64_t p2s_cycles(const isa::RunP2S& ins, const HwConfig& cfg) {
  const std::uint64_t src_bytes = ins.rows * ins.cols * cfg.p2s_elem_bytes();
  return ceil_div(8 * src_bytes, cfg.read_bus_bits) +
         ins.rows * (ins.cols / cfg.write_bus_bits) * ins.precision;
}

/// P2S conversion of one RunP2S. Source elements occupy the smallest of
/// 1/2/4/8 bytes holding M bits, little-endian, row-major. Returns cycles:
/// the read stream at F bits per cycle plus one write cycle per plane each
/// time a set of coalescing buffers (R columns of a row) is written back.
inline std::uint64_t run_p2s(const isa::RunP2S& ins, MemModel& mem, const HwConfig& cfg) {
  if (ins.precision == 0 || ins.precision > cfg.max_precision)
    fail(ErrorKind::Unsupported, "P2S precision " + std::to_string(ins.precision) +
                                     " outside 1.." + std::to_string(cfg.max_precision));
  if (ins.rows == 0 || ins.cols == 0) fail(ErrorKind::Validation, "P2S on an empty matrix");
  if (ins.cols % cfg.write_bus_bits != 0)
    fail(ErrorKind::Validation, "P2S cols must be a multiple of the write bus width");
  const unsigned eb = cfg.p2s_elem_bytes();
  const std::uint64_t row_bytes = ins.cols / 8;
  const std::uint64_t plane_bytes = row_bytes * ins.rows;
  const auto src = mem.read(ins.src_base, ins.rows * ins.cols * eb);
  std::vector<std::uint8_t> dst(plane_bytes * ins.precision, 0);
  for (std::uint64_t r = 0; r < ins.rows; ++r)
    for (std::uint64_t c = 0; c < ins.cols; ++c) {
      const std::uint8_t* e = &src[(r * ins.cols + c) * eb];
      for (unsigned b = 0; b < ins.precision; ++b)
        if ((e[b / 8] >> (b % 8)) & 1u)
          dst[b * plane_bytes + r * row_bytes + c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
    }
  mem.write(ins.dst_base, dst);
  return p2s_cycles(ins, cfg);
}

/// Program interpreter. One instance may run several programs in sequence;
/// buffers and accumulators persist between runs like on the device.
class Simulator {
 public:
  explicit Simulator(HwConfig cfg, SimOptions opts = {})
      : cfg_(std::move(cfg)), opts_(opts) {
    cfg_.validate();
    d_pipe_ = cfg_.execute_pipeline_depth();
    wpw_ = static_cast<unsigned>(ceil_div(cfg_.dk, 64));
    buffers_.resize(cfg_.buffer_count());
    meta_.resize(cfg_.buffer_count());
    for (unsigned b = 0; b < cfg_.buffer_count(); ++b) {
      const std::size_t depth = b < cfg_.dm ? cfg_.bm : cfg_.bn;
      buffers_[b].assign(depth * wpw_, 0);
      meta_[b].assign(depth, {});
    }
    acc_.assign(std::size_t{cfg_.dm} * cfg_.dn, 0);
    slots_.resize(cfg_.br);
    for (auto& s : slots_) s.values.assign(acc_.size(), 0);
  }

  const HwConfig& config() const { return cfg_; }
  unsigned execute_depth() const { return d_pipe_; }

  SimReport run(const isa::Program& p, MemModel& mem) {
    using isa::Stage;
    SimReport rep;
    const std::uint64_t unwritten0 = mem.unwritten_reads();
    for (const auto& ins : p.p2s) {
      const auto* c = std::get_if<isa::RunP2S>(&ins);
      if (!c) fail(ErrorKind::Validation, "p2s queue holds a non-P2S instruction");
      rep.p2s_cycles += opts_.timing_only ? p2s_cycles(*c, cfg_) : run_p2s(*c, mem, cfg_);
    }

    struct StageState {
      std::size_t pc = 0;
      std::uint64_t time = 0;
      detail::VClock clock{};
      bool drain_pending = false;
    };
    std::array<StageState, 3> st{};
    std::array<detail::Fifo, 4> fifos{};
    std::uint64_t commits = 0, drains = 0;
    const std::array<const std::vector<isa::Instruction>*, 3> queues{&p.fetch, &p.execute,
                                                                     &p.result};
    rep_ = &rep;
    mem_ = &mem;

    auto fifo_of = [](Stage from, Stage to) -> int {
      const int f = isa::detail::fifo_index(from, to);
      if (f < 0)
        fail(ErrorKind::Validation, std::string("illegal fifo ") + isa::to_string(from) + "->" +
                                        isa::to_string(to));
      return f;
    };

    auto runnable = [&](int s) {
      const auto& q = *queues[s];
      if (st[s].pc >= q.size()) return false;
      const auto& ins = q[st[s].pc];
      if (const auto* w = std::get_if<isa::Wait>(&ins))
        return !fifos[fifo_of(w->fifo, static_cast<Stage>(s))].tokens.empty();
      if (const auto* g = std::get_if<isa::Signal>(&ins))
        return fifos[fifo_of(static_cast<Stage>(s), g->fifo)].tokens.size() < cfg_.fifo_capacity;
      return true;
    };

    for (;;) {
      int pick = -1;
      bool unfinished = false;
      for (int s = 0; s < 3; ++s) {
        if (st[s].pc < queues[s]->size()) unfinished = true;
        if (runnable(s) && (pick < 0 || st[s].time < st[pick].time)) pick = s;
      }
      if (!unfinished) break;
      if (pick < 0) report_deadlock(p, st[0].pc, st[1].pc, st[2].pc);

      auto& me = st[pick];
      const Stage stage = static_cast<Stage>(pick);
      const auto& ins = (*queues[pick])[me.pc];
      ++me.clock[pick];
      const std::uint64_t start = me.time;
      std::string kind = "run";

      if (const auto* w = std::get_if<isa::Wait>(&ins)) {
        kind = "wait";
        if (w->stage != stage) fail(ErrorKind::Validation, "Wait in the wrong queue");
        auto& f = fifos[fifo_of(w->fifo, stage)];
        const detail::Token tok = f.tokens.front();
        f.tokens.pop_front();
        detail::merge(me.clock, tok.clock);
        if (tok.time > me.time) {
          rep.stall[pick] += tok.time - me.time;
          me.time = tok.time;
        }
        f.pop_times.push_back(me.time);
      } else if (const auto* g = std::get_if<isa::Signal>(&ins)) {
        kind = "signal";
        if (g->stage != stage) fail(ErrorKind::Validation, "Signal in the wrong queue");
        if (stage == Stage::Execute && me.drain_pending) {
          me.time += d_pipe_;
          rep.busy[1] += d_pipe_;
          me.drain_pending = false;
        }
        auto& f = fifos[fifo_of(stage, g->fifo)];
        if (f.pushes >= cfg_.fifo_capacity) {
          const std::uint64_t freed = f.pop_times[f.pushes - cfg_.fifo_capacity];
          if (freed > me.time) {
            rep.stall[pick] += freed - me.time;
            me.time = freed;
          }
        }
        if (stage == Stage::Execute && g->fifo == Stage::Result) commit(commits++, me.clock);
        f.tokens.push_back({me.time, me.clock});
        ++f.pushes;
      } else if (const auto* rf = std::get_if<isa::RunFetch>(&ins)) {
        if (stage != Stage::Fetch) fail(ErrorKind::Validation, "RunFetch outside the fetch queue");
        const std::uint64_t cost = fetch(*rf, me.clock);
        me.time += cost;
        rep.busy[0] += cost;
      } else if (const auto* re = std::get_if<isa::RunExecute>(&ins)) {
        if (stage != Stage::Execute)
          fail(ErrorKind::Validation, "RunExecute outside the execute queue");
        execute(*re, me.clock, me.pc);
        std::uint64_t cost = re->dot_length;
        if (cfg_.pipelined_execute) me.drain_pending = true;
        else cost += d_pipe_;
        me.time += cost;
        rep.busy[1] += cost;
      } else if (const auto* rr = std::get_if<isa::RunResult>(&ins)) {
        if (stage != Stage::Result)
          fail(ErrorKind::Validation, "RunResult outside the result queue");
        drain(*rr, drains++, me.clock);
        const std::uint64_t cost =
            cfg_.dma_latency +
            ceil_div(std::uint64_t{cfg_.dm} * cfg_.dn * cfg_.acc_bits, cfg_.write_bus_bits);
        me.time += cost;
        rep.busy[2] += cost;
      } else {
        fail(ErrorKind::Validation, "RunP2S outside the p2s queue");
      }
      ++rep.instructions[pick];
      if (opts_.record_trace) rep.trace.push_back({stage, me.pc, kind, start, me.time});
      ++me.pc;
    }
    if (st[1].drain_pending) {
      st[1].time += d_pipe_;
      rep.busy[1] += d_pipe_;
    }

    rep.cycles_total = std::max({st[0].time, st[1].time, st[2].time});
    rep.unwritten_reads = mem.unwritten_reads() - unwritten0;
    if (rep.cycles_total > 0) {
      const double peak = 2.0 * cfg_.dm * cfg_.dn * cfg_.dk;
      rep.efficiency = static_cast<double>(rep.binary_ops) / (peak * rep.cycles_total);
      rep.gops = static_cast<double>(rep.binary_ops) * cfg_.f_clk / rep.cycles_total / 1e9;
    }
    rep_ = nullptr;
    mem_ = nullptr;
    return rep;
  }

  /// Current accumulator of DPU (m, n).
  std::int64_t accumulator(unsigned m, unsigned n) const { return acc_[m * cfg_.dn + n]; }

 private:
  void hazard(std::string msg) {
    ++rep_->hazard_count;
    if (rep_->hazards.size() < opts_.max_hazard_messages) rep_->hazards.push_back(std::move(msg));
  }

  std::uint64_t fetch(const isa::RunFetch& f, const detail::VClock& clock) {
    if (f.buf_range == 0 || f.words_per_buffer == 0)
      fail(ErrorKind::Validation, "RunFetch with empty buffer range");
    const unsigned wb = cfg_.word_bytes();
    if (f.block_size_bytes % wb != 0)
      fail(ErrorKind::Validation, "RunFetch block size not a multiple of the buffer word");
    if (f.buf_start + f.buf_range > cfg_.buffer_count())
      fail(ErrorKind::Validation, "RunFetch buffer index out of range");
    if (opts_.timing_only) {
      const std::uint64_t bytes = f.total_bytes();
      rep_->bytes_fetched += bytes;
      return cfg_.dma_latency + ceil_div(8 * bytes, cfg_.read_bus_bits);
    }
    std::vector<std::uint8_t> stream;
    stream.reserve(f.total_bytes());
    for (std::uint64_t b = 0; b < f.block_count; ++b) {
      const auto blk = mem_->read(f.dram_base + b * f.block_offset_bytes, f.block_size_bytes);
      stream.insert(stream.end(), blk.begin(), blk.end());
    }
    const std::uint64_t words = stream.size() / wb;
    const std::uint64_t tick = clock[0];
    for (std::uint64_t w = 0; w < words; ++w) {
      const auto t = isa::route_word(f, w);
      const std::uint64_t depth = t.buffer < cfg_.dm ? cfg_.bm : cfg_.bn;
      if (t.address >= depth)
        fail(ErrorKind::Validation, "RunFetch writes buffer " + std::to_string(t.buffer) +
                                        " at address " + std::to_string(t.address) +
                                        " beyond depth " + std::to_string(depth));
      auto& m = meta_[t.buffer][t.address];
      if (m.read_tick > clock[1])
        hazard("fetch overwrote buffer " + std::to_string(t.buffer) + " address " +
               std::to_string(t.address) + " before execute finished reading it");
      m.write_tick = tick;
      std::uint64_t* dst = &buffers_[t.buffer][t.address * wpw_];
      for (unsigned k = 0; k < wpw_; ++k) dst[k] = 0;
      for (unsigned byte = 0; byte < wb; ++byte)
        dst[byte / 8] |= std::uint64_t{stream[w * wb + byte]} << (8 * (byte % 8));
      ++rep_->buffer_writes;
    }
    rep_->bytes_fetched += stream.size();
    return cfg_.dma_latency + ceil_div(8 * stream.size(), cfg_.read_bus_bits);
  }

  void check_read(unsigned buffer, std::uint64_t addr, const detail::VClock& clock) {
    auto& m = meta_[buffer][addr];
    if (m.write_tick == 0)
      hazard("execute read unfetched buffer " + std::to_string(buffer) + " address " +
             std::to_string(addr));
    else if (m.write_tick > clock[0])
      hazard("execute read buffer " + std::to_string(buffer) + " address " +
             std::to_string(addr) + " before its fetch was signalled");
    m.read_tick = std::max(m.read_tick, clock[1]);
  }

  void execute(const isa::RunExecute& e, const detail::VClock& clock, std::size_t index) {
    if (e.dot_length == 0) fail(ErrorKind::Validation, "RunExecute with dot_length 0");
    if (e.lhs_offset + e.dot_length > cfg_.bm || e.rhs_offset + e.dot_length > cfg_.bn)
      fail(ErrorKind::Validation, "RunExecute reads beyond buffer depth");
    rep_->binary_ops += 2ull * cfg_.dm * cfg_.dn * cfg_.dk * e.dot_length;
    if (opts_.timing_only) return;
    for (unsigned m = 0; m < cfg_.dm; ++m)
      for (std::uint64_t t = 0; t < e.dot_length; ++t) check_read(m, e.lhs_offset + t, clock);
    for (unsigned n = 0; n < cfg_.dn; ++n)
      for (std::uint64_t t = 0; t < e.dot_length; ++t)
        check_read(cfg_.dm + n, e.rhs_offset + t, clock);
    const std::size_t span = e.dot_length * wpw_;
    for (unsigned m = 0; m < cfg_.dm; ++m) {
      const std::uint64_t* l = &buffers_[m][e.lhs_offset * wpw_];
      for (unsigned n = 0; n < cfg_.dn; ++n) {
        const std::uint64_t* r = &buffers_[cfg_.dm + n][e.rhs_offset * wpw_];
        std::uint64_t pc = 0;
        for (std::size_t k = 0; k < span; ++k) pc += std::popcount(l[k] & r[k]);
        auto& a = acc_[m * cfg_.dn + n];
        if (!dpu_accumulate(a, static_cast<std::int64_t>(pc), e.negate, e.acc, cfg_.acc_bits))
          fail(ErrorKind::Overflow, "accumulator overflow in DPU (" + std::to_string(m) + ", " +
                                        std::to_string(n) + ") at execute instruction " +
                                        std::to_string(index));
      }
    }
  }

  void commit(std::uint64_t k, const detail::VClock& clock) {
    if (opts_.timing_only) return;
    auto& s = slots_[k % slots_.size()];
    if (s.full) hazard("result slot " + std::to_string(k % slots_.size()) +
                       " overwritten before it was drained");
    else if (s.drain_tick > clock[2])
      hazard("result slot " + std::to_string(k % slots_.size()) +
             " overwritten while being drained");
    s.values = acc_;
    s.full = true;
    s.commit_tick = clock[1];
  }

  void drain(const isa::RunResult& r, std::uint64_t k, const detail::VClock& clock) {
    if (opts_.timing_only) {
      rep_->result_bytes += std::uint64_t{cfg_.dm} * cfg_.dn * cfg_.acc_bytes();
      return;
    }
    auto& s = slots_[k % slots_.size()];
    if (!s.full)
      hazard("RunResult drained empty result slot " + std::to_string(k % slots_.size()));
    else if (s.commit_tick > clock[1])
      hazard("RunResult ran before the commit of slot " + std::to_string(k % slots_.size()) +
             " was signalled");
    const unsigned nb = cfg_.acc_bytes();
    std::vector<std::uint8_t> out(s.values.size() * nb);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const auto u = static_cast<std::uint64_t>(s.values[i]);
      for (unsigned b = 0; b < nb; ++b) out[i * nb + b] = static_cast<std::uint8_t>(u >> (8 * b));
    }
    mem_->write(r.dram_base + r.offset, out);
    rep_->result_bytes += out.size();
    s.full = false;
    s.drain_tick = clock[2];
  }

  [[noreturn]] void report_deadlock(const isa::Program& p, std::size_t f, std::size_t e,
                                    std::size_t r) const {
    std::ostringstream os;
    os << "deadlock:";
    const std::array<std::pair<const char*, std::pair<const std::vector<isa::Instruction>*, std::size_t>>, 3>
        parts{{{"fetch", {&p.fetch, f}}, {"execute", {&p.execute, e}}, {"result", {&p.result, r}}}};
    for (const auto& [name, qp] : parts) {
      const auto& [q, pc] = qp;
      os << " " << name;
      if (pc >= q->size()) os << " done;";
      else os << " blocked at #" << pc << " (" << isa::encode((*q)[pc]) << ");";
    }
    fail(ErrorKind::Deadlock, os.str());
  }

  HwConfig cfg_;
  SimOptions opts_;
  unsigned d_pipe_ = 0;
  unsigned wpw_ = 1;  // 64-bit words per Dk-bit buffer entry
  std::vector<std::vector<std::uint64_t>> buffers_;
  std::vector<std::vector<detail::WordMeta>> meta_;
  std::vector<std::int64_t> acc_;
  std::vector<detail::ResultSlot> slots_;
  SimReport* rep_ = nullptr;
  MemModel* mem_ = nullptr;
};

/// Runs `p` for its memory effects only.
inline void run_functional(const isa::Program& p, MemModel& mem, const HwConfig& cfg) {
  Simulator(cfg).run(p, mem);
}

/// Runs `p` and returns the cycle report; memory effects are identical to
/// run_functional.
inline SimReport run_timed(const isa::Program& p, MemModel& mem, const HwConfig& cfg,
                           SimOptions opts = {}) {
  return Simulator(cfg, opts).run(p, mem);
}

/// Cycle report of `p` without data: timing never depends on operand values.
inline SimReport time_program(const isa::Program& p, const HwConfig& cfg) {
  SimOptions o;
  o.timing_only = true;
  MemModel none;
  return Simulator(cfg, o).run(p, none);
}

/// Single-pass execute efficiency (K/Dk) / (K/Dk + d_pipe).
inline std::vector<std::pair<std::uint64_t, double>> efficiency_curve(
    const HwConfig& cfg, const std::vector<std::uint64_t>& ks) {
  const double d = cfg.execute_pipeline_depth();
  std::vector<std::pair<std::uint64_t, double>> out;
  out.reserve(ks.size());
  for (auto k : ks) {
    if (k == 0 || k % cfg.dk != 0)
      fail(ErrorKind::Validation, "K=" + std::to_string(k) + " is not a multiple of Dk");
    const double words = static_cast<double>(k / cfg.dk);
    out.emplace_back(k, words / (words + d));
  }
  return out;
}

}  // namespace bismo

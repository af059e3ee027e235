#pragma once

// Overlay instruction set: typed instructions, a program of per-stage queues,
// static validation, and a line-oriented text encoding.

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "bismo/error.hpp"
#include "bismo/hw_config.hpp"
#include "bismo/refgemm.hpp"

namespace bismo::isa {

enum class Stage : std::uint8_t { Fetch, Execute, Result };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::Fetch: return "fetch";
    case Stage::Execute: return "execute";
    case Stage::Result: return "result";
  }
  return "?";
}

inline char stage_letter(Stage s) { return "FER"[static_cast<int>(s)]; }

/// Token FIFOs exist only between fetch/execute and execute/result.
inline bool legal_fifo(Stage self, Stage peer) {
  if (self == Stage::Execute) return peer == Stage::Fetch || peer == Stage::Result;
  if (self == Stage::Fetch || self == Stage::Result) return peer == Stage::Execute;
  return false;
}

struct Wait {
  Stage stage = Stage::Execute;
  Stage fifo = Stage::Fetch;  // peer stage
  friend bool operator==(const Wait&, const Wait&) = default;
};

struct Signal {
  Stage stage = Stage::Fetch;
  Stage fifo = Stage::Execute;
  friend bool operator==(const Signal&, const Signal&) = default;
};

struct RunFetch {
  std::uint64_t dram_base = 0;
  std::uint64_t block_size_bytes = 0;
  std::uint64_t block_offset_bytes = 0;
  std::uint64_t block_count = 1;
  std::uint64_t buf_offset = 0;
  std::uint64_t buf_start = 0;
  std::uint64_t buf_range = 1;
  std::uint64_t words_per_buffer = 1;
  friend bool operator==(const RunFetch&, const RunFetch&) = default;

  std::uint64_t total_bytes() const { return block_size_bytes * block_count; }
};

struct RunExecute {
  std::uint64_t lhs_offset = 0;
  std::uint64_t rhs_offset = 0;
  std::uint64_t dot_length = 1;
  bool negate = false;
  AccMode acc = AccMode::Keep;
  friend bool operator==(const RunExecute&, const RunExecute&) = default;
};

struct RunResult {
  std::uint64_t dram_base = 0;
  std::uint64_t offset = 0;
  friend bool operator==(const RunResult&, const RunResult&) = default;
};

struct RunP2S {
  std::uint64_t src_base = 0;
  std::uint64_t dst_base = 0;
  std::uint64_t rows = 1;
  std::uint64_t cols = 1;
  std::uint64_t precision = 1;
  friend bool operator==(const RunP2S&, const RunP2S&) = default;
};

using Instruction = std::variant<Wait, Signal, RunFetch, RunExecute, RunResult, RunP2S>;

struct Program {
  std::vector<Instruction> fetch;
  std::vector<Instruction> execute;
  std::vector<Instruction> result;
  std::vector<Instruction> p2s;
  /// Free-form `key=value` annotations carried as `#@` lines.
  std::map<std::string, std::string> meta;

  std::vector<Instruction>& queue(Stage s) {
    return s == Stage::Fetch ? fetch : s == Stage::Execute ? execute : result;
  }
  const std::vector<Instruction>& queue(Stage s) const {
    return s == Stage::Fetch ? fetch : s == Stage::Execute ? execute : result;
  }
  std::size_t size() const { return fetch.size() + execute.size() + result.size() + p2s.size(); }
  bool empty() const { return size() == 0; }

  friend bool operator==(const Program&, const Program&) = default;
};

// ---------------------------------------------------------------------------
// Fetch routing

/// Destination of stream word `w` of a RunFetch.
struct WordTarget {
  std::uint64_t buffer;
  std::uint64_t address;
};

inline WordTarget route_word(const RunFetch& f, std::uint64_t w) {
  const std::uint64_t g = f.words_per_buffer;
  return {f.buf_start + (w / g) % f.buf_range, f.buf_offset + (w / (g * f.buf_range)) * g + w % g};
}

/// Highest address written into each of the buf_range destination buffers
/// (nullopt-like -1 when a buffer receives nothing).
inline std::vector<std::int64_t> max_addresses(const RunFetch& f, std::uint64_t words) {
  std::vector<std::int64_t> out(f.buf_range, -1);
  if (words == 0 || f.words_per_buffer == 0 || f.buf_range == 0) return out;
  const std::uint64_t g = f.words_per_buffer;
  const std::uint64_t groups = ceil_div(words, g);
  for (std::uint64_t k = 0; k < f.buf_range && k < groups; ++k) {
    const std::uint64_t q = k + ((groups - 1 - k) / f.buf_range) * f.buf_range;  // last group of k
    const std::uint64_t size = std::min(g, words - q * g);
    out[k] = static_cast<std::int64_t>(f.buf_offset + (q / f.buf_range) * g + size - 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

enum class Severity : std::uint8_t { Warning, Error };

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string queue;  // "fetch", "execute", "result", "p2s" or "program"
  std::int64_t index = -1;
  std::string message;

  std::string to_string() const {
    std::ostringstream os;
    os << (severity == Severity::Error ? "error" : "warning") << ": " << queue;
    if (index >= 0) os << "[" << index << "]";
    os << ": " << message;
    return os.str();
  }
};

struct ValidationResult {
  std::vector<Diagnostic> diagnostics;

  bool ok() const {
    for (const auto& d : diagnostics)
      if (d.severity == Severity::Error) return false;
    return true;
  }
  std::size_t errors() const {
    std::size_t n = 0;
    for (const auto& d : diagnostics) n += d.severity == Severity::Error;
    return n;
  }
  bool mentions(const std::string& text) const {
    for (const auto& d : diagnostics)
      if (d.message.find(text) != std::string::npos) return true;
    return false;
  }
};

namespace detail {

inline int fifo_index(Stage from, Stage to) {
  if (from == Stage::Fetch && to == Stage::Execute) return 0;
  if (from == Stage::Execute && to == Stage::Fetch) return 1;
  if (from == Stage::Execute && to == Stage::Result) return 2;
  if (from == Stage::Result && to == Stage::Execute) return 3;
  return -1;
}

inline const char* fifo_name(int idx) {
  static const char* names[] = {"fetch->execute", "execute->fetch", "execute->result",
                                "result->execute"};
  return names[idx];
}

}  // namespace detail

/// Static checks. Structural faults are reported as diagnostics, never thrown.
inline ValidationResult validate(const Program& p, const HwConfig& cfg) {
  ValidationResult res;
  auto add = [&](Severity s, const std::string& q, std::int64_t i, std::string msg) {
    res.diagnostics.push_back({s, q, i, std::move(msg)});
  };
  const std::uint64_t nbuf = cfg.buffer_count();
  std::uint64_t signals[4] = {0, 0, 0, 0};
  std::uint64_t waits[4] = {0, 0, 0, 0};
  std::uint64_t result_runs = 0;

  for (Stage s : {Stage::Fetch, Stage::Execute, Stage::Result}) {
    const auto& q = p.queue(s);
    const std::string qn = to_string(s);
    for (std::size_t idx = 0; idx < q.size(); ++idx) {
      const auto i = static_cast<std::int64_t>(idx);
      std::visit(
          [&](const auto& ins) {
            using T = std::decay_t<decltype(ins)>;
            if constexpr (std::is_same_v<T, Wait> || std::is_same_v<T, Signal>) {
              constexpr bool is_wait = std::is_same_v<T, Wait>;
              if (ins.stage != s) add(Severity::Error, qn, i, "instruction placed in the wrong queue");
              if (!legal_fifo(s, ins.fifo)) {
                add(Severity::Error, qn, i,
                    std::string("illegal fifo pair ") + to_string(s) + "/" + to_string(ins.fifo));
              } else if constexpr (is_wait) {
                ++waits[detail::fifo_index(ins.fifo, s)];
              } else {
                ++signals[detail::fifo_index(s, ins.fifo)];
              }
            } else if constexpr (std::is_same_v<T, RunFetch>) {
              if (s != Stage::Fetch) {
                add(Severity::Error, qn, i, "RunFetch outside the fetch queue");
                return;
              }
              if (ins.buf_range == 0) add(Severity::Error, qn, i, "buf_range must be >= 1");
              if (ins.words_per_buffer == 0) add(Severity::Error, qn, i, "words_per_buffer must be >= 1");
              if (ins.block_count == 0 || ins.block_size_bytes == 0)
                add(Severity::Error, qn, i, "empty transfer");
              if (ins.block_size_bytes % cfg.word_bytes() != 0)
                add(Severity::Error, qn, i,
                    "block size not a multiple of the " + std::to_string(cfg.word_bytes()) +
                        "-byte buffer word");
              if (ins.buf_start >= nbuf || ins.buf_start + ins.buf_range > nbuf) {
                add(Severity::Error, qn, i, "buffer index out of range");
                return;
              }
              if (ins.buf_range == 0 || ins.words_per_buffer == 0) return;
              const std::uint64_t words = ins.total_bytes() / cfg.word_bytes();
              const auto maxes = max_addresses(ins, words);
              for (std::uint64_t k = 0; k < maxes.size(); ++k) {
                if (maxes[k] < 0) continue;
                const std::uint64_t b = ins.buf_start + k;
                const std::uint64_t depth = b < cfg.dm ? cfg.bm : cfg.bn;
                if (static_cast<std::uint64_t>(maxes[k]) >= depth) {
                  add(Severity::Error, qn, i,
                      "buffer offset out of range in buffer " + std::to_string(b) + " (address " +
                          std::to_string(maxes[k]) + ", depth " + std::to_string(depth) + ")");
                  break;
                }
              }
            } else if constexpr (std::is_same_v<T, RunExecute>) {
              if (s != Stage::Execute) {
                add(Severity::Error, qn, i, "RunExecute outside the execute queue");
                return;
              }
              if (ins.dot_length == 0) add(Severity::Error, qn, i, "dot_length must be >= 1");
              if (ins.lhs_offset + ins.dot_length > cfg.bm)
                add(Severity::Error, qn, i, "buffer offset out of range (lhs)");
              if (ins.rhs_offset + ins.dot_length > cfg.bn)
                add(Severity::Error, qn, i, "buffer offset out of range (rhs)");
            } else if constexpr (std::is_same_v<T, RunResult>) {
              if (s != Stage::Result) {
                add(Severity::Error, qn, i, "RunResult outside the result queue");
                return;
              }
              ++result_runs;
            } else {
              add(Severity::Error, qn, i, "RunP2S outside the p2s queue");
            }
          },
          q[idx]);
    }
  }

  for (std::size_t idx = 0; idx < p.p2s.size(); ++idx) {
    const auto i = static_cast<std::int64_t>(idx);
    const auto* ins = std::get_if<RunP2S>(&p.p2s[idx]);
    if (!ins) {
      add(Severity::Error, "p2s", i, "the p2s queue accepts only RunP2S");
      continue;
    }
    if (ins->precision == 0 || ins->precision > cfg.max_precision)
      add(Severity::Error, "p2s", i, "precision outside 1..M");
    if (ins->rows == 0 || ins->cols == 0) add(Severity::Error, "p2s", i, "empty matrix");
    if (ins->cols % cfg.write_bus_bits != 0)
      add(Severity::Error, "p2s", i, "cols not a multiple of the write bus width");
  }

  for (int f = 0; f < 4; ++f) {
    const std::string name = detail::fifo_name(f);
    if (waits[f] > signals[f])
      add(Severity::Error, "program", -1,
          "token deadlock: " + std::to_string(waits[f]) + " waits but " +
              std::to_string(signals[f]) + " signals on " + name);
    else if (signals[f] - waits[f] > cfg.fifo_capacity)
      add(Severity::Error, "program", -1,
          "token deadlock: " + std::to_string(signals[f] - waits[f]) +
              " unconsumed tokens exceed fifo capacity on " + name);
    else if (signals[f] > waits[f])
      add(Severity::Warning, "program", -1,
          std::to_string(signals[f] - waits[f]) + " unconsumed tokens on " + name);
  }
  if (result_runs > signals[2])
    add(Severity::Error, "program", -1,
        "more RunResult instructions than execute->result commits");
  return res;
}

// ---------------------------------------------------------------------------
// Text encoding
//
//   F run dram_base=.. block_size_bytes=.. block_offset_bytes=.. block_count=..
//         buf_offset=.. buf_start=.. buf_range=.. words_per_buffer=..
//   E run lhs_offset=.. rhs_offset=.. dot_length=.. negate=0|1 acc=zero|keep|shl1
//   R run dram_base=.. offset=..
//   P run src_base=.. dst_base=.. rows=.. cols=.. precision=..
//   F|E|R wait|signal fetch|execute|result
//   # comment        #@ key=value (metadata)

inline std::string encode(const Instruction& ins) {
  std::ostringstream os;
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Wait>) {
          os << stage_letter(x.stage) << " wait " << to_string(x.fifo);
        } else if constexpr (std::is_same_v<T, Signal>) {
          os << stage_letter(x.stage) << " signal " << to_string(x.fifo);
        } else if constexpr (std::is_same_v<T, RunFetch>) {
          os << "F run dram_base=" << x.dram_base << " block_size_bytes=" << x.block_size_bytes
             << " block_offset_bytes=" << x.block_offset_bytes << " block_count=" << x.block_count
             << " buf_offset=" << x.buf_offset << " buf_start=" << x.buf_start
             << " buf_range=" << x.buf_range << " words_per_buffer=" << x.words_per_buffer;
        } else if constexpr (std::is_same_v<T, RunExecute>) {
          os << "E run lhs_offset=" << x.lhs_offset << " rhs_offset=" << x.rhs_offset
             << " dot_length=" << x.dot_length << " negate=" << (x.negate ? 1 : 0)
             << " acc=" << bismo::to_string(x.acc);
        } else if constexpr (std::is_same_v<T, RunResult>) {
          os << "R run dram_base=" << x.dram_base << " offset=" << x.offset;
        } else {
          os << "P run src_base=" << x.src_base << " dst_base=" << x.dst_base << " rows=" << x.rows
             << " cols=" << x.cols << " precision=" << x.precision;
        }
      },
      ins);
  return os.str();
}

inline std::string encode(const Program& p) {
  std::ostringstream os;
  for (const auto& [k, v] : p.meta) os << "#@ " << k << "=" << v << "\n";
  for (const auto* q : {&p.p2s, &p.fetch, &p.execute, &p.result})
    for (const auto& ins : *q) os << encode(ins) << "\n";
  return os.str();
}

namespace detail {

struct LineParser {
  std::size_t line;
  std::map<std::string, std::string> fields;
  std::map<std::string, bool> used;

  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorKind::Format, "line " + std::to_string(line) + ": " + msg);
  }

  const std::string& raw(const std::string& name) {
    auto it = fields.find(name);
    if (it == fields.end()) error("missing field '" + name + "'");
    used[name] = true;
    return it->second;
  }

  std::uint64_t u64(const std::string& name) {
    const std::string& v = raw(name);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
      error("field '" + name + "': expected an unsigned integer, got '" + v + "'");
    return out;
  }

  void finish() const {
    for (const auto& [k, v] : fields)
      if (!used.count(k)) error("unknown field '" + k + "'");
  }
};

inline Stage parse_stage_name(const std::string& s, const LineParser& lp) {
  if (s == "fetch") return Stage::Fetch;
  if (s == "execute") return Stage::Execute;
  if (s == "result") return Stage::Result;
  lp.error("unknown stage '" + s + "'");
}

}  // namespace detail

inline Program decode(const std::string& text) {
  Program p;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    detail::LineParser lp{lineno, {}, {}};
    if (line.rfind("#@", 0) == 0) {
      std::istringstream ms(line.substr(2));
      std::string kv;
      while (ms >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) lp.error("metadata must be key=value");
        p.meta[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      continue;
    }
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string q, op;
    if (!(ls >> q)) continue;
    if (!(ls >> op)) lp.error("missing operation after '" + q + "'");
    if (q.size() != 1 || std::string("FERP").find(q[0]) == std::string::npos)
      lp.error("unknown queue '" + q + "'");
    const char qc = q[0];
    const Stage stage = qc == 'F' ? Stage::Fetch : qc == 'E' ? Stage::Execute : Stage::Result;

    if (op == "wait" || op == "signal") {
      if (qc == 'P') lp.error("the p2s queue has no synchronization instructions");
      std::string peer, extra;
      if (!(ls >> peer)) lp.error("missing fifo for " + op);
      if (ls >> extra) lp.error("unexpected token '" + extra + "'");
      const Stage fifo = detail::parse_stage_name(peer, lp);
      if (op == "wait") p.queue(stage).push_back(Wait{stage, fifo});
      else p.queue(stage).push_back(Signal{stage, fifo});
      continue;
    }
    if (op != "run") lp.error("unknown operation '" + op + "'");
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0) lp.error("expected field=value, got '" + tok + "'");
      const std::string key = tok.substr(0, eq);
      if (lp.fields.count(key)) lp.error("duplicate field '" + key + "'");
      lp.fields[key] = tok.substr(eq + 1);
    }
    switch (qc) {
      case 'F': {
        RunFetch f;
        f.dram_base = lp.u64("dram_base");
        f.block_size_bytes = lp.u64("block_size_bytes");
        f.block_offset_bytes = lp.u64("block_offset_bytes");
        f.block_count = lp.u64("block_count");
        f.buf_offset = lp.u64("buf_offset");
        f.buf_start = lp.u64("buf_start");
        f.buf_range = lp.u64("buf_range");
        f.words_per_buffer = lp.u64("words_per_buffer");
        lp.finish();
        p.fetch.push_back(f);
        break;
      }
      case 'E': {
        RunExecute e;
        e.lhs_offset = lp.u64("lhs_offset");
        e.rhs_offset = lp.u64("rhs_offset");
        e.dot_length = lp.u64("dot_length");
        const auto neg = lp.u64("negate");
        if (neg > 1) lp.error("field 'negate': expected 0 or 1");
        e.negate = neg == 1;
        const std::string& acc = lp.raw("acc");
        if (acc == "zero") e.acc = AccMode::Zero;
        else if (acc == "keep") e.acc = AccMode::Keep;
        else if (acc == "shl1") e.acc = AccMode::ShiftLeft1;
        else lp.error("field 'acc': expected zero, keep or shl1, got '" + acc + "'");
        lp.finish();
        p.execute.push_back(e);
        break;
      }
      case 'R': {
        RunResult r;
        r.dram_base = lp.u64("dram_base");
        r.offset = lp.u64("offset");
        lp.finish();
        p.result.push_back(r);
        break;
      }
      default: {
        RunP2S c;
        c.src_base = lp.u64("src_base");
        c.dst_base = lp.u64("dst_base");
        c.rows = lp.u64("rows");
        c.cols = lp.u64("cols");
        c.precision = lp.u64("precision");
        lp.finish();
        p.p2s.push_back(c);
        break;
      }
    }
  }
  return p;
}

}  // namespace bismo::isa

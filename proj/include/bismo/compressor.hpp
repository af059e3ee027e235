#pragma once

// Bit-heap model of the fused AND-popcount: pre-compression of bit-product
// triples, greedy placement of parallel counters into pipeline stages, a
// functional simulator for the resulting plan, and usage statistics.

#include <algorithm>
#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bismo/error.hpp"

namespace bismo::compressor {

/// A parallel counter: sums `signature[t]` bits of weight 2^t (relative to
/// its anchor column) into `output_bits` bits placed at the anchor upwards.
struct Counter {
  std::string name;
  std::vector<unsigned> signature;  // low to high column
  unsigned output_bits = 0;
  unsigned lut_cost = 0;

  unsigned inputs() const { return std::accumulate(signature.begin(), signature.end(), 0u); }

  std::uint64_t max_sum() const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < signature.size(); ++t) s += std::uint64_t{signature[t]} << t;
    return s;
  }

  bool preserves_value() const { return max_sum() < (std::uint64_t{1} << output_bits); }

  bool is_full_adder() const { return signature.size() == 1 && signature[0] == 3; }
};

/// Full adder, (6:3), (2,5:4) and a carry-chain slice atom. Names use the
/// high-to-low column notation.
inline std::vector<Counter> default_library() {
  return {
      {"(3:2)", {3}, 2, 1},
      {"(6:3)", {6}, 3, 3},
      {"(2,5:4)", {5, 2}, 4, 4},
      {"(2,2,2,3:5)", {3, 2, 2, 2}, 5, 4},
  };
}

using Heights = std::vector<std::size_t>;

inline std::size_t max_height(const Heights& h) {
  return h.empty() ? 0 : *std::max_element(h.begin(), h.end());
}

/// Weighted bits; column w holds bits of weight 2^w.
struct BitHeap {
  std::vector<std::vector<std::uint8_t>> columns;

  Heights heights() const {
    Heights h;
    for (const auto& c : columns) h.push_back(c.size());
    return h;
  }

  std::size_t height() const { return max_height(heights()); }

  std::uint64_t value() const {
    std::uint64_t v = 0;
    for (std::size_t w = 0; w < columns.size(); ++w)
      for (auto bit : columns[w]) v += std::uint64_t{bit} << w;
    return v;
  }

  void push(std::size_t column, std::uint8_t bit) {
    if (columns.size() <= column) columns.resize(column + 1);
    columns[column].push_back(bit);
  }
};

/// Products are grouped in threes starting at index 0; each group becomes a
/// (carry, sum) pair. A trailing pair uses a half adder, a trailing single
/// product passes through.
inline BitHeap precompress(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size())
    fail(ErrorKind::Dimension, "operand lengths differ: " + std::to_string(a.size()) + " vs " +
                                   std::to_string(b.size()));
  if (a.empty()) fail(ErrorKind::Dimension, "operands must have at least one bit");
  BitHeap heap;
  heap.columns.resize(2);
  for (std::size_t g = 0; g < a.size(); g += 3) {
    unsigned s = 0;
    const std::size_t n = std::min<std::size_t>(3, a.size() - g);
    for (std::size_t t = 0; t < n; ++t) s += (a[g + t] & b[g + t]) & 1u;
    heap.columns[0].push_back(s & 1u);
    if (n > 1) heap.columns[1].push_back((s >> 1) & 1u);
  }
  return heap;
}

/// Column heights after pre-compression of `width` products.
inline Heights precompressed_heights(std::size_t width) {
  const std::size_t groups = (width + 2) / 3;
  const std::size_t carries = width / 3 + (width % 3 == 2 ? 1 : 0);
  return {groups, carries};
}

struct Placement {
  std::size_t counter = 0;  // index into the plan's library
  std::size_t anchor = 0;   // column of signature[0]

  friend bool operator==(const Placement&, const Placement&) = default;
};

struct Stage {
  std::vector<Placement> placements;
  Heights heights_after;
};

struct CompressionPlan {
  std::size_t input_width = 0;
  std::vector<Counter> library;
  Heights initial_heights;
  std::vector<Stage> stages;

  std::size_t final_rows() const {
    return max_height(stages.empty() ? initial_heights : stages.back().heights_after);
  }
};

namespace detail {

inline bool fits(const Counter& c, const Heights& avail, std::size_t anchor) {
  for (std::size_t t = 0; t < c.signature.size(); ++t) {
    const std::size_t col = anchor + t;
    const std::size_t have = col < avail.size() ? avail[col] : 0;
    if (have < c.signature[t]) return false;
  }
  return true;
}

inline Heights apply_stage(const std::vector<Counter>& lib, const Heights& entry,
                           const std::vector<Placement>& placements) {
  Heights remaining = entry;
  Heights produced(entry.size(), 0);
  for (const auto& p : placements) {
    const Counter& c = lib[p.counter];
    for (std::size_t t = 0; t < c.signature.size(); ++t) remaining[p.anchor + t] -= c.signature[t];
    if (produced.size() < p.anchor + c.output_bits) produced.resize(p.anchor + c.output_bits, 0);
    for (unsigned o = 0; o < c.output_bits; ++o) ++produced[p.anchor + o];
  }
  Heights next(std::max(remaining.size(), produced.size()), 0);
  for (std::size_t w = 0; w < next.size(); ++w)
    next[w] = (w < remaining.size() ? remaining[w] : 0) + (w < produced.size() ? produced[w] : 0);
  while (!next.empty() && next.back() == 0) next.pop_back();
  return next;
}

/// Library indices in greedy preference order: most bits eliminated per
/// counter first, then widest input, then cheapest.
inline std::vector<std::size_t> elimination_order(const std::vector<Counter>& lib) {
  std::vector<std::size_t> order(lib.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto rx = static_cast<long>(lib[x].inputs()) - lib[x].output_bits;
    const auto ry = static_cast<long>(lib[y].inputs()) - lib[y].output_bits;
    if (rx != ry) return rx > ry;
    if (lib[x].inputs() != lib[y].inputs()) return lib[x].inputs() > lib[y].inputs();
    return lib[x].lut_cost < lib[y].lut_cost;
  });
  return order;
}

/// Highest input/output ratio first.
inline std::vector<std::size_t> ratio_order(const std::vector<Counter>& lib) {
  std::vector<std::size_t> order(lib.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return lib[x].inputs() * lib[y].output_bits > lib[y].inputs() * lib[x].output_bits;
  });
  return order;
}

inline std::size_t stage_cost(const std::vector<Counter>& lib, const std::vector<Placement>& ps) {
  std::size_t c = 0;
  for (const auto& p : ps) c += lib[p.counter].lut_cost;
  return c;
}

inline std::vector<Placement> greedy_stage(const std::vector<Counter>& lib,
                                           const std::vector<std::size_t>& order,
                                           const Heights& entry) {
  Heights avail = entry;
  std::vector<Placement> out;
  for (std::size_t col = 0; col < avail.size(); ++col) {
    bool placed = true;
    while (placed) {
      placed = false;
      for (std::size_t idx : order) {
        if (fits(lib[idx], avail, col)) {
          for (std::size_t t = 0; t < lib[idx].signature.size(); ++t)
            avail[col + t] -= lib[idx].signature[t];
          out.push_back({idx, col});
          placed = true;
          break;
        }
      }
    }
  }
  return out;
}

inline std::vector<Placement> full_adder_stage(std::size_t fa, const Heights& entry) {
  std::vector<Placement> out;
  for (std::size_t col = 0; col < entry.size(); ++col)
    for (std::size_t n = 0; n < entry[col] / 3; ++n) out.push_back({fa, col});
  return out;
}

}  // namespace detail

/// Greedy stage-by-stage reduction to at most three rows. Within a stage,
/// columns are scanned low to high and each column is filled with the most
/// preferred counter that still fits the bits available at stage entry.
/// Each stage tries a few preference orders and keeps the flattest result.
inline CompressionPlan schedule(const Heights& initial, std::vector<Counter> library) {
  if (max_height(initial) == 0) fail(ErrorKind::Dimension, "bit heap is empty");
  std::optional<std::size_t> fa;
  for (std::size_t i = 0; i < library.size(); ++i) {
    if (!library[i].preserves_value())
      fail(ErrorKind::Validation, "counter " + library[i].name + " cannot represent its input sum");
    if (library[i].is_full_adder() && !fa) fa = i;
  }
  if (!fa) fail(ErrorKind::Validation, "counter library must contain a full adder");

  CompressionPlan plan;
  plan.library = std::move(library);
  plan.initial_heights = initial;
  while (!plan.initial_heights.empty() && plan.initial_heights.back() == 0)
    plan.initial_heights.pop_back();
  const auto by_elimination = detail::elimination_order(plan.library);
  const auto by_ratio = detail::ratio_order(plan.library);
  std::vector<std::size_t> by_ratio_single_column;
  for (std::size_t idx : by_ratio)
    if (plan.library[idx].signature.size() == 1) by_ratio_single_column.push_back(idx);

  Heights cur = plan.initial_heights;
  while (max_height(cur) > 3) {
    // Candidates in priority order; the lowest resulting height wins, then
    // the cheapest, then the earliest. Full adders alone always shrink a
    // heap taller than three rows.
    std::vector<std::vector<Placement>> candidates{
        detail::greedy_stage(plan.library, by_elimination, cur),
        detail::greedy_stage(plan.library, by_ratio, cur),
        detail::greedy_stage(plan.library, by_ratio_single_column, cur),
        detail::full_adder_stage(*fa, cur),
    };
    std::optional<Stage> best;
    for (auto& cand : candidates) {
      Heights after = detail::apply_stage(plan.library, cur, cand);
      if (max_height(after) >= max_height(cur)) continue;
      const bool better =
          !best || max_height(after) < max_height(best->heights_after) ||
          (max_height(after) == max_height(best->heights_after) &&
           detail::stage_cost(plan.library, cand) < detail::stage_cost(plan.library, best->placements));
      if (better) best = Stage{std::move(cand), std::move(after)};
    }
    cur = best->heights_after;
    plan.stages.push_back(std::move(*best));
  }
  return plan;
}

inline CompressionPlan schedule(const BitHeap& heap,
                                std::vector<Counter> library = default_library()) {
  return schedule(heap.heights(), std::move(library));
}

/// Plan for the fused AND-popcount of `width`-bit operands.
inline CompressionPlan popcount_plan(std::size_t width,
                                     std::vector<Counter> library = default_library()) {
  if (width == 0) fail(ErrorKind::Dimension, "popcount width must be >= 1");
  CompressionPlan p = schedule(precompressed_heights(width), std::move(library));
  p.input_width = width;
  return p;
}

/// Applies one stage of counters to real bits. Counters take bits from the
/// front of each column; untouched bits pass through.
inline BitHeap apply_stage(const std::vector<Counter>& lib, const BitHeap& in,
                           const std::vector<Placement>& placements) {
  std::vector<std::size_t> cursor(in.columns.size(), 0);
  BitHeap out;
  for (const auto& p : placements) {
    const Counter& c = lib[p.counter];
    std::uint64_t sum = 0;
    for (std::size_t t = 0; t < c.signature.size(); ++t) {
      const std::size_t col = p.anchor + t;
      for (unsigned k = 0; k < c.signature[t]; ++k) {
        if (col >= in.columns.size() || cursor[col] >= in.columns[col].size())
          fail(ErrorKind::Validation, "counter " + c.name + " at column " +
                                          std::to_string(p.anchor) + " lacks input bits");
        sum += std::uint64_t{in.columns[col][cursor[col]++]} << t;
      }
    }
    for (unsigned o = 0; o < c.output_bits; ++o)
      out.push(p.anchor + o, static_cast<std::uint8_t>((sum >> o) & 1u));
  }
  for (std::size_t col = 0; col < in.columns.size(); ++col)
    for (std::size_t k = cursor[col]; k < in.columns[col].size(); ++k) out.push(col, in.columns[col][k]);
  while (!out.columns.empty() && out.columns.back().empty()) out.columns.pop_back();
  return out;
}

/// Heap value at entry and after every stage, followed by the final sum.
inline std::vector<std::uint64_t> simulate_trace(const CompressionPlan& plan,
                                                 std::span<const std::uint8_t> a,
                                                 std::span<const std::uint8_t> b) {
  if (plan.input_width != a.size() || a.size() != b.size())
    fail(ErrorKind::Dimension, "plan built for width " + std::to_string(plan.input_width) +
                                   ", operands have " + std::to_string(a.size()) + " and " +
                                   std::to_string(b.size()) + " bits");
  BitHeap heap = precompress(a, b);
  std::vector<std::uint64_t> values{heap.value()};
  for (const auto& st : plan.stages) {
    heap = apply_stage(plan.library, heap, st.placements);
    Heights h = heap.heights();
    if (h != st.heights_after) fail(ErrorKind::Validation, "heap shape diverged from plan");
    values.push_back(heap.value());
  }
  if (heap.height() > 3) fail(ErrorKind::Validation, "plan leaves more than three rows");
  values.push_back(heap.value());  // final carry-propagating addition
  return values;
}

inline std::uint64_t simulate(const CompressionPlan& plan, std::span<const std::uint8_t> a,
                              std::span<const std::uint8_t> b) {
  return simulate_trace(plan, a, b).back();
}

using CounterHistogram = std::map<std::string, std::size_t>;

inline CounterHistogram counter_stats(const CompressionPlan& plan) {
  CounterHistogram h;
  for (const auto& st : plan.stages)
    for (const auto& p : st.placements) ++h[plan.library[p.counter].name];
  return h;
}

/// Register stages of the DPU datapath: pre-compression, each compression
/// stage, the final addition and the accumulator.
inline std::size_t pipeline_depth(std::size_t width) {
  static std::mutex mu;
  static std::map<std::size_t, std::size_t> memo;
  std::lock_guard<std::mutex> lock(mu);
  if (auto it = memo.find(width); it != memo.end()) return it->second;
  const std::size_t d = 1 + popcount_plan(width).stages.size() + 1 + 1;
  memo.emplace(width, d);
  return d;
}

/// Rough LUT estimate: two LUTs per pre-compressed triple, the counter
/// costs, and one LUT per column of the final ternary adder.
inline std::size_t estimated_luts(const CompressionPlan& plan) {
  std::size_t luts = 2 * ((plan.input_width + 2) / 3);
  for (const auto& st : plan.stages)
    for (const auto& p : st.placements) luts += plan.library[p.counter].lut_cost;
  const Heights& last = plan.stages.empty() ? plan.initial_heights : plan.stages.back().heights_after;
  return luts + last.size();
}

/// Published counter usage for the reference compressor generator. The
/// "(3:1]" column has no described counterpart; absent entries are nullopt.
struct ReferenceCounterStats {
  std::size_t width;
  std::optional<std::size_t> c25, c63, c31, slice;
};

inline std::optional<ReferenceCounterStats> reference_stats(std::size_t width) {
  static const ReferenceCounterStats table[] = {
      {32, 3, 1, std::nullopt, std::nullopt},
      {64, 4, 3, 2, 1},
      {128, 8, 7, 5, 3},
      {256, 17, 13, 3, 9},
      {512, 38, 25, 4, 19},
      {1024, 79, 51, 6, 38},
  };
  for (const auto& r : table)
    if (r.width == width) return r;
  return std::nullopt;
}

/// Dot diagram of column heights, most significant column on the left.
inline std::string dot_diagram(const Heights& h) {
  std::ostringstream os;
  const std::size_t top = max_height(h);
  for (std::size_t level = top; level >= 1; --level) {
    for (std::size_t col = h.size(); col-- > 0;) os << (h[col] >= level ? '*' : ' ');
    os << '\n';
  }
  return os.str();
}

}  // namespace bismo::compressor

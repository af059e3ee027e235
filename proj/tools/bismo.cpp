// Command-line front end: p2s, s2p, gemm, schedule, sim, validate, cost, compressor.

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "bismo/bismo.hpp"

using namespace bismo;

namespace {

enum Exit : int {
  kOk = 0,
  kOther = 1,
  kInvalid = 2,
  kCapacity = 3,
  kOverflow = 4,
  kIo = 5,
  kDeadlock = 6,
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Capacity: return kCapacity;
    case ErrorKind::Overflow: return kOverflow;
    case ErrorKind::Io: return kIo;
    case ErrorKind::Deadlock: return kDeadlock;
    case ErrorKind::Hazard: return kOther;
    default: return kInvalid;
  }
}

/// Hardware flags shared by all subcommands. Unset flags leave the value
/// from the config file or environment in place.
struct HwFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void add(CLI::App& app) {
    app.add_option("--config", config_file, "key=value hardware configuration file")
        ->check(CLI::ExistingFile);
    const std::pair<const char*, const char*> opts[] = {
        {"dm", "DPU rows"},
        {"dn", "DPU columns"},
        {"dk", "popcount width"},
        {"bm", "LHS buffer depth"},
        {"bn", "RHS buffer depth"},
        {"br", "result buffer slots"},
        {"acc-bits", "accumulator width A"},
        {"read-bus", "read bus width F"},
        {"write-bus", "write bus width R"},
        {"max-precision", "P2S maximum precision M"},
        {"fclk", "clock frequency in Hz"},
        {"d-pipe", "execute pipeline depth (0 = derive)"},
        {"dma-latency", "DMA request latency in cycles"},
        {"fifo-capacity", "sync FIFO capacity"},
        {"pipelined-execute", "overlap execute pipeline fill (0/1)"},
    };
    for (const auto& [name, help] : opts) {
      const std::string key = name;
      app.add_option_function<std::string>(
          "--" + key, [this, key](const std::string& v) { values[key] = v; }, help);
    }
  }

  HwConfig resolve() const {
    static const std::map<std::string, std::string> to_key{
        {"acc-bits", "a"},        {"read-bus", "f"},         {"write-bus", "r"},
        {"max-precision", "m"},   {"d-pipe", "d_pipe"},      {"dma-latency", "dma_latency"},
        {"fifo-capacity", "fifo_capacity"}, {"pipelined-execute", "pipelined_execute"}};
    HwConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    apply_env_overrides(cfg);
    for (const auto& [flag, v] : values) {
      auto it = to_key.find(flag);
      cfg.set(it == to_key.end() ? flag : it->second, v);
    }
    cfg.validate();
    return cfg;
  }
};

/// Echoes the run manifest so every output can be reproduced.
std::string manifest(const std::string& sub, const std::vector<std::pair<std::string, std::string>>& args,
                     const HwConfig* cfg) {
  std::ostringstream os;
  os << "# bismo " << sub;
  for (const auto& [k, v] : args) os << " " << k << "=" << v;
  os << "\n";
  if (cfg) {
    std::istringstream in(cfg->to_text());
    std::string line;
    os << "# hw";
    while (std::getline(in, line)) os << " " << line;
    os << "\n";
  }
  return os.str();
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") std::cout << text;
  else io::write_text(path, text);
}

std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// --- p2s / s2p -------------------------------------------------------------

struct P2SArgs {
  std::string input, out;
  unsigned bits = 0;
  bool is_signed = false;
};

int cmd_p2s(const P2SArgs& a, const HwConfig& cfg) {
  const auto m = io::load_matrix(a.input, a.bits, a.is_signed);
  if (m.bits() > cfg.max_precision)
    fail(ErrorKind::Unsupported, "precision " + std::to_string(m.bits()) + " exceeds M=" +
                                     std::to_string(cfg.max_precision));
  const auto bytes = io::encode_bsmx(m, cfg.write_bus_bits);
  io::write_file(a.out, bytes);

  // Modeled accelerator run on the column-padded matrix.
  const auto padded = m.padded(m.rows(), round_up(m.cols(), cfg.write_bus_bits));
  const unsigned eb = cfg.p2s_elem_bytes();
  const std::uint64_t src_bytes = padded.rows() * padded.cols() * eb;
  MemModel mem(src_bytes + padded.rows() * padded.cols() * m.bits() / 8);
  mem.write(0, io::encode_raw(padded, eb));
  const auto cycles = run_p2s(isa::RunP2S{0, src_bytes, padded.rows(), padded.cols(), m.bits()}, mem, cfg);

  std::cout << manifest("p2s", {{"input", a.input}, {"out", a.out}, {"bits", std::to_string(a.bits)},
                                {"signed", a.is_signed ? "1" : "0"}},
                        &cfg)
            << "rows=" << m.rows() << "\ncols=" << m.cols() << "\nbits=" << m.bits()
            << "\nsigned=" << m.is_signed() << "\ninput_bytes=" << src_bytes
            << "\nplane_bytes=" << io::bsmx_payload(bytes).size() / m.bits()
            << "\noutput_bytes=" << bytes.size() << "\np2s_cycles=" << cycles << "\n";
  return kOk;
}

int cmd_s2p(const std::string& input, const std::string& out) {
  const auto m = io::decode_bsmx(io::read_file(input), input);
  emit(io::to_csv(m, {"bismo s2p input=" + input}), out);
  return kOk;
}

// --- gemm ------------------------------------------------------------------

struct Operands {
  std::string lhs, rhs;
  unsigned lhs_bits = 0, rhs_bits = 0;
  bool lhs_signed = false, rhs_signed = false;
  std::string random_shape;  // MxKxN
  std::uint64_t seed = 1;

  void add(CLI::App& app) {
    app.add_option("--lhs", lhs, "left operand (.csv, .bsmx or raw + .json sidecar)");
    app.add_option("--rhs", rhs, "right operand");
    app.add_option("--lhs-bits", lhs_bits, "LHS precision for CSV input (0 = fit)");
    app.add_option("--rhs-bits", rhs_bits, "RHS precision for CSV input (0 = fit)");
    app.add_flag("--lhs-signed", lhs_signed, "LHS is signed");
    app.add_flag("--rhs-signed", rhs_signed, "RHS is signed");
    app.add_option("--random", random_shape, "use random operands of shape MxKxN instead of files");
    app.add_option("--seed", seed, "seed for --random");
  }

  std::pair<BitParallelMatrix, BitParallelMatrix> load() const {
    if (!random_shape.empty()) {
      std::size_t m = 0, k = 0, n = 0;
      char x1 = 0, x2 = 0;
      std::istringstream in(random_shape);
      if (!(in >> m >> x1 >> k >> x2 >> n) || x1 != 'x' || x2 != 'x' || m == 0 || k == 0 || n == 0)
        fail(ErrorKind::Format, "--random expects MxKxN, got '" + random_shape + "'");
      std::mt19937_64 rng(seed);
      auto gen = [&](std::size_t r, std::size_t c, unsigned bits, bool sg) {
        const auto [lo, hi] = value_range(bits, sg);
        std::uniform_int_distribution<std::int64_t> d(lo, hi);
        std::vector<std::int64_t> v(r * c);
        for (auto& e : v) e = d(rng);
        return BitParallelMatrix(r, c, bits, sg, std::move(v));
      };
      const unsigned lb = lhs_bits ? lhs_bits : 1, rb = rhs_bits ? rhs_bits : 1;
      auto l = gen(m, k, lb, lhs_signed);
      return {std::move(l), gen(k, n, rb, rhs_signed)};
    }
    if (lhs.empty() || rhs.empty()) fail(ErrorKind::Io, "--lhs and --rhs are required");
    return {io::load_matrix(lhs, lhs_bits, lhs_signed), io::load_matrix(rhs, rhs_bits, rhs_signed)};
  }

  std::vector<std::pair<std::string, std::string>> describe() const {
    if (!random_shape.empty())
      return {{"random", random_shape}, {"seed", std::to_string(seed)},
              {"lhs_bits", std::to_string(lhs_bits)}, {"rhs_bits", std::to_string(rhs_bits)},
              {"lhs_signed", lhs_signed ? "1" : "0"}, {"rhs_signed", rhs_signed ? "1" : "0"}};
    return {{"lhs", lhs}, {"rhs", rhs}, {"lhs_bits", std::to_string(lhs_bits)},
            {"rhs_bits", std::to_string(rhs_bits)}, {"lhs_signed", lhs_signed ? "1" : "0"},
            {"rhs_signed", rhs_signed ? "1" : "0"}};
  }
};

struct GemmArgs {
  Operands ops;
  std::string engine = "naive";
  bool no_overlap = false;
  bool compare_overlap = false;
  std::string out, report, program;
};

std::string sim_report_text(const SimReport& r) { return r.to_key_value(); }

int cmd_gemm(const GemmArgs& a, const HwConfig& cfg) {
  const auto [lhs, rhs] = a.ops.load();
  auto args = a.ops.describe();
  args.emplace_back("engine", a.engine);
  args.emplace_back("overlap", a.no_overlap ? "0" : "1");
  const bool sim = a.engine == "sim";
  const std::string head = manifest("gemm", args, sim ? &cfg : nullptr);
  AccumMatrix p;
  std::string report;
  if (a.engine == "naive") {
    p = gemm_naive(lhs, rhs, cfg.acc_bits);
  } else if (a.engine == "bitserial") {
    p = gemm_bitserial(decompose(lhs), decompose(rhs), cfg.acc_bits);
  } else if (a.engine == "wavefront") {
    p = gemm_wavefront(decompose(lhs), decompose(rhs), cfg.acc_bits);
  } else {
    ScheduleOptions opt;
    opt.overlap = !a.no_overlap;
    const auto g = gemm_simulated(lhs, rhs, cfg, opt);
    p = g.product;
    report = sim_report_text(g.report);
    if (a.compare_overlap) {
      opt.overlap = !opt.overlap;
      const auto other = gemm_simulated(lhs, rhs, cfg, opt);
      const auto ov = opt.overlap ? other.report.cycles_total : g.report.cycles_total;
      const auto seq = opt.overlap ? g.report.cycles_total : other.report.cycles_total;
      report += "overlapped_cycles=" + std::to_string(ov) + "\nsequential_cycles=" +
                std::to_string(seq) + "\noverlap_speedup=" +
                fixed(static_cast<double>(seq) / static_cast<double>(ov), 4) + "\n";
    }
    if (!a.program.empty()) io::write_text(a.program, isa::encode(g.program));
  }
  emit(io::to_csv(p, {head.substr(2, head.find('\n') - 2)}), a.out);
  if (sim) {
    if (a.report.empty()) std::cerr << head << report;
    else emit(head + report, a.report);
  }
  return kOk;
}

// --- schedule / sim / validate -----------------------------------------------

struct ScheduleArgs {
  GemmShape shape;
  bool no_overlap = false;
  std::uint64_t chunk_words = 0;
  std::string out;
};

int cmd_schedule(const ScheduleArgs& a, const HwConfig& cfg) {
  ScheduleOptions opt;
  opt.overlap = !a.no_overlap;
  opt.chunk_words = a.chunk_words;
  const auto prog = generate(a.shape, cfg, opt);
  const auto& s = a.shape;
  const std::string head =
      manifest("schedule",
               {{"rows", std::to_string(s.rows)}, {"depth", std::to_string(s.depth)},
                {"cols", std::to_string(s.cols)}, {"lhs_bits", std::to_string(s.lhs_bits)},
                {"rhs_bits", std::to_string(s.rhs_bits)}, {"lhs_signed", std::to_string(s.lhs_signed)},
                {"rhs_signed", std::to_string(s.rhs_signed)}, {"overlap", std::to_string(opt.overlap)},
                {"chunk_words", std::to_string(a.chunk_words)}},
               &cfg);
  emit(head + isa::encode(prog), a.out);
  if (!a.out.empty() && a.out != "-")
    std::cout << "fetch=" << prog.fetch.size() << "\nexecute=" << prog.execute.size()
              << "\nresult=" << prog.result.size() << "\n";
  return kOk;
}

std::string timeline(const SimReport& r, std::size_t width) {
  const std::uint64_t total = std::max<std::uint64_t>(r.cycles_total, 1);
  std::ostringstream os;
  const char* names[] = {"fetch  ", "execute", "result "};
  for (int s = 0; s < 3; ++s) {
    std::string row(width, '.');
    for (const auto& e : r.trace) {
      if (static_cast<int>(e.stage) != s) continue;
      const char c = e.kind == "run" ? '#' : (e.kind == "wait" ? 'w' : 's');
      const std::size_t b = e.start * width / total;
      const std::size_t end = std::max(b + 1, static_cast<std::size_t>(e.end * width / total));
      for (std::size_t i = b; i < std::min(end, width); ++i)
        if (c == '#' || row[i] == '.') row[i] = c;
    }
    os << names[s] << " |" << row << "|\n";
  }
  os << "cycles 0.." << r.cycles_total << ", one column = " << fixed(double(total) / width, 1)
     << " cycles\n";
  return os.str();
}

struct SimArgs {
  std::string program;
  Operands ops;
  std::vector<std::string> loads, dumps;
  std::uint64_t mem_size = 0;
  std::string out, report, trace;
  bool show_timeline = false;
  bool skip_validation = false;
  std::size_t timeline_width = 100;
};

std::pair<std::uint64_t, std::string> parse_addr_file(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) fail(ErrorKind::Format, "expected ADDR:FILE, got '" + spec + "'");
  try {
    return {std::stoull(spec.substr(0, colon), nullptr, 0), spec.substr(colon + 1)};
  } catch (const std::exception&) {
    fail(ErrorKind::Format, "bad address in '" + spec + "'");
  }
}

int cmd_sim(const SimArgs& a, const HwConfig& cfg) {
  const auto prog = isa::decode(io::read_text(a.program));
  const auto v = isa::validate(prog, cfg);
  for (const auto& d : v.diagnostics) std::cerr << a.program << ": " << d.to_string() << "\n";
  if (!v.ok() && !a.skip_validation)
    fail(ErrorKind::Validation, a.program + ": program failed validation");

  const bool gemm_mode = !a.ops.lhs.empty() || !a.ops.random_shape.empty();
  std::optional<MemoryLayout> layout;
  std::uint64_t size = a.mem_size;
  if (gemm_mode) {
    layout = layout_from_meta(prog, cfg);
    size = std::max<std::uint64_t>(size, layout->total_bytes);
  }
  std::vector<std::pair<std::uint64_t, std::vector<std::uint8_t>>> images;
  for (const auto& spec : a.loads) {
    auto [addr, file] = parse_addr_file(spec);
    auto bytes = io::read_file(file);
    if (file.size() > 5 && file.substr(file.size() - 5) == ".bsmx") bytes = io::bsmx_payload(bytes, file);
    size = std::max<std::uint64_t>(size, addr + bytes.size());
    images.emplace_back(addr, std::move(bytes));
  }
  if (auto it = prog.meta.find("memory_bytes"); it != prog.meta.end())
    size = std::max<std::uint64_t>(size, std::stoull(it->second));
  MemModel mem(size);
  if (gemm_mode) {
    const auto [l, r] = a.ops.load();
    stage_operands(l, r, *layout, mem);
  }
  for (const auto& [addr, bytes] : images) mem.write(addr, bytes);

  SimOptions so;
  so.record_trace = !a.trace.empty() || a.show_timeline;
  const auto rep = run_timed(prog, mem, cfg, so);

  auto args = std::vector<std::pair<std::string, std::string>>{{"program", a.program}};
  if (gemm_mode)
    for (auto& kv : a.ops.describe()) args.push_back(kv);
  for (const auto& l : a.loads) args.emplace_back("load", l);
  const std::string head = manifest("sim", args, &cfg);
  emit(head + rep.to_key_value(), a.report);

  if (gemm_mode) {
    const auto p = read_result(mem, *layout);
    if (!a.out.empty()) emit(io::to_csv(p, {"bismo sim program=" + a.program}), a.out);
  }
  for (const auto& spec : a.dumps) {
    // ADDR:BYTES:FILE
    const auto c1 = spec.find(':'), c2 = spec.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      fail(ErrorKind::Format, "expected ADDR:BYTES:FILE, got '" + spec + "'");
    std::uint64_t addr = 0, n = 0;
    try {
      addr = std::stoull(spec.substr(0, c1), nullptr, 0);
      n = std::stoull(spec.substr(c1 + 1, c2 - c1 - 1), nullptr, 0);
    } catch (const std::exception&) {
      fail(ErrorKind::Format, "bad dump spec '" + spec + "'");
    }
    io::write_file(spec.substr(c2 + 1), mem.read(addr, n));
  }
  if (!a.trace.empty()) {
    std::ostringstream os;
    os << "stage,index,kind,start,end\n";
    for (const auto& e : rep.trace)
      os << isa::to_string(e.stage) << "," << e.index << "," << e.kind << "," << e.start << ","
         << e.end << "\n";
    io::write_text(a.trace, os.str());
  }
  if (a.show_timeline) std::cout << timeline(rep, a.timeline_width);
  return kOk;
}

int cmd_validate(const std::string& path, const HwConfig& cfg) {
  const auto prog = isa::decode(io::read_text(path));
  const auto v = isa::validate(prog, cfg);
  for (const auto& d : v.diagnostics) std::cout << path << ": " << d.to_string() << "\n";
  std::cout << "errors=" << v.errors() << "\n";
  return v.ok() ? kOk : kInvalid;
}

// --- cost ----------------------------------------------------------------------

struct CostArgs {
  std::string constants;
  std::vector<unsigned> sweep_d, sweep_dk;
  bool measured = false;
  std::string csv;
};

int cmd_cost(const CostArgs& a, const HwConfig& cfg) {
  const cost::CostConstants c = a.constants.empty() ? cost::CostConstants{} : cost::load_constants(a.constants);
  std::cout << manifest("cost", {{"constants", a.constants.empty() ? "default" : a.constants}}, &cfg);
  std::ostringstream csv;
  if (a.measured) {
    csv << "dm,dk,dn,luts_measured,luts_model,lut_error,brams_measured,brams_model,gops_measured,gops_model\n";
    std::cout << "  Dm   Dk   Dn   LUT meas  LUT model   err  BRAM meas  model   GOPS meas   model\n";
    for (const auto& m : cost::measured_instances()) {
      const auto r = cost::estimate(cost::config_of(m), c);
      const double err = r.lut_total / m.luts - 1;
      std::cout << std::setw(4) << m.dm << std::setw(5) << m.dk << std::setw(5) << m.dn
                << std::setw(11) << fixed(m.luts, 0) << std::setw(11) << fixed(r.lut_total, 0)
                << std::setw(6) << fixed(100 * err, 1) << "%" << std::setw(10) << m.brams
                << std::setw(7) << fixed(r.bram_total, 0) << std::setw(12) << fixed(m.gops, 1)
                << std::setw(8) << fixed(r.peak_gops, 1) << "\n";
      csv << m.dm << "," << m.dk << "," << m.dn << "," << m.luts << "," << fixed(r.lut_total, 2) << ","
          << fixed(err, 4) << "," << m.brams << "," << r.bram_total << "," << m.gops << ","
          << fixed(r.peak_gops, 2) << "\n";
    }
  } else if (!a.sweep_d.empty() || !a.sweep_dk.empty()) {
    std::vector<HwConfig> cfgs;
    const auto ds = a.sweep_d.empty() ? std::vector<unsigned>{cfg.dm} : a.sweep_d;
    const auto dks = a.sweep_dk.empty() ? std::vector<unsigned>{cfg.dk} : a.sweep_dk;
    for (unsigned d : ds)
      for (unsigned dk : dks) {
        HwConfig x = cfg;
        x.dm = x.dn = d;
        x.dk = dk;
        x.validate();
        cfgs.push_back(x);
      }
    csv << "dm,dn,dk,lut_total,bram_total,peak_gops,luts_per_op,dpu_luts_per_op,legacy_dpu_luts_per_op\n";
    std::cout << "  Dm   Dn    Dk   LUT total  BRAM   peak GOPS  LUT/op  DPU LUT/op  legacy\n";
    for (const auto& row : cost::sweep(cfgs, c)) {
      const auto& x = row.cfg;
      std::cout << std::setw(4) << x.dm << std::setw(5) << x.dn << std::setw(6) << x.dk
                << std::setw(12) << fixed(row.report.lut_total, 1) << std::setw(6)
                << fixed(row.report.bram_total, 0) << std::setw(12) << fixed(row.report.peak_gops, 1)
                << std::setw(8) << fixed(row.luts_per_op, 3) << std::setw(12)
                << fixed(cost::dpu_luts_per_op(x.dk, c), 3) << std::setw(8)
                << fixed(cost::legacy_dpu_luts_per_op(x.dk, c), 3) << "\n";
      csv << x.dm << "," << x.dn << "," << x.dk << "," << fixed(row.report.lut_total, 2) << ","
          << row.report.bram_total << "," << fixed(row.report.peak_gops, 2) << ","
          << fixed(row.luts_per_op, 5) << "," << fixed(cost::dpu_luts_per_op(x.dk, c), 5) << ","
          << fixed(cost::legacy_dpu_luts_per_op(x.dk, c), 5) << "\n";
    }
  } else {
    const auto r = cost::estimate(cfg, c);
    std::ostringstream kv;
    kv << "lut_dpu=" << fixed(r.lut_dpu, 2) << "\nlut_array=" << fixed(r.lut_array, 2)
       << "\nlut_base=" << fixed(r.lut_base, 2) << "\nlut_total=" << fixed(r.lut_total, 2)
       << "\nbram_array=" << r.bram_array << "\nbram_total=" << r.bram_total
       << "\npeak_binary_ops_per_cycle=" << r.peak_binary_ops_per_cycle
       << "\npeak_gops=" << fixed(r.peak_gops, 1) << "\n";
    std::cout << kv.str();
    csv << "key,value\n";
    std::istringstream in(kv.str());
    std::string line;
    while (std::getline(in, line)) csv << line.replace(line.find('='), 1, ",") << "\n";
  }
  if (!a.csv.empty()) io::write_text(a.csv, csv.str());
  return kOk;
}

// --- compressor --------------------------------------------------------------

int cmd_compressor(unsigned dk, bool dots, const std::string& csv_path) {
  using namespace bismo::compressor;
  if (dk == 0) fail(ErrorKind::Validation, "--dk must be positive");
  const auto plan = popcount_plan(dk);
  std::cout << manifest("compressor", {{"dk", std::to_string(dk)}}, nullptr);
  std::cout << "width=" << dk << "\ninitial_height=" << max_height(plan.initial_heights)
            << "\nstages=" << plan.stages.size() << "\nfinal_rows=" << plan.final_rows()
            << "\npipeline_depth=" << pipeline_depth(dk) << "\nestimated_luts=" << estimated_luts(plan)
            << "\n";
  if (dots) std::cout << "\nafter pre-compression\n" << dot_diagram(plan.initial_heights);
  for (std::size_t s = 0; s < plan.stages.size(); ++s) {
    const auto& st = plan.stages[s];
    std::map<std::string, std::size_t> used;
    for (const auto& p : st.placements) ++used[plan.library[p.counter].name];
    std::cout << "stage " << s + 1 << ": height " << max_height(st.heights_after) << ",";
    for (const auto& [n, c] : used) std::cout << " " << n << "x" << c;
    std::cout << "\n";
    if (dots) std::cout << dot_diagram(st.heights_after);
  }
  const auto hist = counter_stats(plan);
  std::cout << "histogram:";
  if (hist.empty()) std::cout << " (none)";
  for (const auto& [n, c] : hist) std::cout << " " << n << "=" << c;
  std::cout << "\n";
  std::ostringstream csv;
  csv << "counter,count,reference\n";
  auto count = [&](const char* n) {
    auto it = hist.find(n);
    return it == hist.end() ? std::size_t{0} : it->second;
  };
  if (const auto ref = reference_stats(dk)) {
    auto show = [&](const char* label, const char* ours, std::optional<std::size_t> r) {
      const std::size_t n = ours ? count(ours) : 0;
      std::cout << "reference " << label << ": " << (r ? std::to_string(*r) : "n/a") << " (ours "
                << (ours ? std::to_string(n) : "n/a")
                << (r && ours ? ", deviation " + std::to_string(long(n) - long(*r)) : "") << ")\n";
      csv << label << "," << (ours ? std::to_string(n) : "") << "," << (r ? std::to_string(*r) : "")
          << "\n";
    };
    show("(2,5:4)", "(2,5:4)", ref->c25);
    show("(6:3)", "(6:3)", ref->c63);
    show("(3:1]", nullptr, ref->c31);
    show("slice", "(2,2,2,3:5)", ref->slice);
  } else {
    for (const auto& [n, c] : hist) csv << n << "," << c << ",\n";
  }
  if (!csv_path.empty()) io::write_text(csv_path, csv.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bit-serial matrix multiplication overlay toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  HwFlags hw;
  hw.add(app);

  P2SArgs p2s;
  auto* sp2s = app.add_subcommand("p2s", "bit-parallel matrix to bit-serial BSMX file");
  sp2s->add_option("--input", p2s.input, "input matrix")->required();
  sp2s->add_option("--bits", p2s.bits, "precision for CSV input (0 = fit)");
  sp2s->add_flag("--signed", p2s.is_signed, "elements are signed");
  sp2s->add_option("--out", p2s.out, "output .bsmx")->required();

  std::string s2p_in, s2p_out;
  auto* ss2p = app.add_subcommand("s2p", "BSMX file back to CSV");
  ss2p->add_option("--input", s2p_in, "input .bsmx")->required();
  ss2p->add_option("--out", s2p_out, "output CSV (default stdout)");

  GemmArgs gemm;
  auto* sgemm = app.add_subcommand("gemm", "multiply two matrices");
  gemm.ops.add(*sgemm);
  sgemm->add_option("--engine", gemm.engine, "naive|bitserial|wavefront|sim")
      ->check(CLI::IsMember({"naive", "bitserial", "wavefront", "sim"}));
  sgemm->add_flag("--no-overlap", gemm.no_overlap, "sequential fetch/execute/result schedule");
  sgemm->add_flag("--compare-overlap", gemm.compare_overlap, "also run the other schedule and report the ratio");
  sgemm->add_option("--out", gemm.out, "result CSV (default stdout)");
  sgemm->add_option("--report", gemm.report, "simulation report file (default stderr)");
  sgemm->add_option("--program", gemm.program, "write the generated program");

  ScheduleArgs sch;
  auto* ssch = app.add_subcommand("schedule", "generate an instruction program");
  ssch->add_option("--rows", sch.shape.rows, "M")->required();
  ssch->add_option("--depth", sch.shape.depth, "K")->required();
  ssch->add_option("--cols", sch.shape.cols, "N")->required();
  ssch->add_option("--lhs-bits", sch.shape.lhs_bits, "l");
  ssch->add_option("--rhs-bits", sch.shape.rhs_bits, "r");
  ssch->add_flag("--lhs-signed", sch.shape.lhs_signed, "LHS is signed");
  ssch->add_flag("--rhs-signed", sch.shape.rhs_signed, "RHS is signed");
  ssch->add_flag("--no-overlap", sch.no_overlap, "sequential schedule");
  ssch->add_option("--chunk-words", sch.chunk_words, "Dk words per K chunk (0 = derive)");
  ssch->add_option("--out", sch.out, "program file (default stdout)");

  SimArgs sim;
  auto* ssim = app.add_subcommand("sim", "run a program on the simulator");
  ssim->add_option("--program", sim.program, "program file")->required();
  sim.ops.add(*ssim);
  ssim->add_option("--load", sim.loads, "ADDR:FILE memory image (.bsmx payload or raw bytes)");
  ssim->add_option("--dump", sim.dumps, "ADDR:BYTES:FILE memory region to write out");
  ssim->add_option("--mem-size", sim.mem_size, "memory size in bytes");
  ssim->add_option("--out", sim.out, "result CSV when operands are given");
  ssim->add_option("--report", sim.report, "report file (default stdout)");
  ssim->add_option("--trace", sim.trace, "per-instruction trace CSV");
  ssim->add_flag("--timeline", sim.show_timeline, "print a text timeline of the three stages");
  ssim->add_option("--timeline-width", sim.timeline_width, "timeline columns");
  ssim->add_flag("--no-validate", sim.skip_validation, "run even if static validation reports errors");

  std::string val_path;
  auto* sval = app.add_subcommand("validate", "check a program");
  sval->add_option("--program", val_path, "program file")->required();

  CostArgs cst;
  auto* scost = app.add_subcommand("cost", "resource and throughput estimate");
  scost->add_option("--constants", cst.constants, "cost constants file (key=value)");
  scost->add_option("--sweep-d", cst.sweep_d, "Dm = Dn values to sweep")->delimiter(',');
  scost->add_option("--sweep-dk", cst.sweep_dk, "Dk values to sweep")->delimiter(',');
  scost->add_flag("--measured", cst.measured, "compare against the measured instances");
  scost->add_option("--csv", cst.csv, "write the numbers as CSV");

  unsigned comp_dk = 0;
  bool comp_dots = false;
  std::string comp_csv;
  auto* scomp = app.add_subcommand("compressor", "popcount compressor plan");
  scomp->add_option("--dk", comp_dk, "input width (defaults to the configured Dk)");
  scomp->add_flag("--dots", comp_dots, "print dot diagrams");
  scomp->add_option("--csv", comp_csv, "write the histogram as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*ss2p) return cmd_s2p(s2p_in, s2p_out);
    const HwConfig cfg = hw.resolve();
    if (*sp2s) return cmd_p2s(p2s, cfg);
    if (*sgemm) return cmd_gemm(gemm, cfg);
    if (*ssch) return cmd_schedule(sch, cfg);
    if (*ssim) return cmd_sim(sim, cfg);
    if (*sval) return cmd_validate(val_path, cfg);
    if (*scost) return cmd_cost(cst, cfg);
    if (*scomp) return cmd_compressor(comp_dk ? comp_dk : cfg.dk, comp_dots, comp_csv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}

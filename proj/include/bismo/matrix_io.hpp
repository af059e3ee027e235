#pragma once

// Matrix files: decimal CSV, raw row-major binary with a JSON sidecar, and
// the BSMX bit-serial container.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bismo/bitmatrix.hpp"
#include "bismo/error.hpp"
#include "bismo/refgemm.hpp"

namespace bismo::io {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed: " + path);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed: " + path);
}

inline std::string read_text(const std::string& path) {
  const auto b = read_file(path);
  return {b.begin(), b.end()};
}

// ---------------------------------------------------------------------------
// CSV: one row per line, comma-separated decimal integers. Blank lines and
// lines starting with '#' are skipped.

inline std::vector<std::vector<std::int64_t>> parse_csv(const std::string& text,
                                                        const std::string& source = "<csv>") {
  std::vector<std::vector<std::int64_t>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<std::int64_t> row;
    std::stringstream ls(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ls, cell, ',')) {
      ++col;
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      if (b == std::string::npos)
        fail(ErrorKind::Format, source + ":" + std::to_string(lineno) + ": empty cell " +
                                    std::to_string(col));
      const std::string tok = cell.substr(b, e - b + 1);
      try {
        std::size_t pos = 0;
        const long long v = std::stoll(tok, &pos, 10);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        row.push_back(v);
      } catch (const std::exception&) {
        fail(ErrorKind::Format, source + ":" + std::to_string(lineno) + ": cell " +
                                    std::to_string(col) + " is not an integer: '" + tok + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorKind::Dimension, source + ":" + std::to_string(lineno) + ": row has " +
                                     std::to_string(row.size()) + " columns, expected " +
                                     std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty()) fail(ErrorKind::Format, source + ": empty matrix");
  return rows;
}

/// Smallest width holding every element, at least 1 bit.
inline unsigned required_bits(const std::vector<std::vector<std::int64_t>>& rows, bool is_signed) {
  for (unsigned b = 1; b <= kMaxBits; ++b) {
    const auto [lo, hi] = value_range(b, is_signed);
    bool ok = true;
    for (const auto& r : rows)
      for (auto v : r)
        if (v < lo || v > hi) ok = false;
    if (ok) return b;
  }
  fail(ErrorKind::Range, "values need more than 64 bits");
}

/// bits == 0 picks the smallest width that holds the data.
inline BitParallelMatrix load_csv(const std::string& path, unsigned bits, bool is_signed) {
  const auto rows = parse_csv(read_text(path), path);
  if (bits == 0) bits = required_bits(rows, is_signed);
  return BitParallelMatrix::from_rows(rows, bits, is_signed);
}

inline std::string to_csv(const AccumMatrix& m, const std::vector<std::string>& header = {}) {
  std::ostringstream os;
  for (const auto& h : header) os << "# " << h << "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
    os << "\n";
  }
  return os.str();
}

inline std::string to_csv(const BitParallelMatrix& m, const std::vector<std::string>& header = {}) {
  std::ostringstream os;
  for (const auto& h : header) os << "# " << h << "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Raw binary: row-major little-endian elements of elem_bytes each, described
// by a JSON sidecar {"rows", "cols", "bits", "signed", "elem_bytes"}.

struct RawHeader {
  std::size_t rows = 0;
  std::size_t cols = 0;
  unsigned bits = 8;
  bool is_signed = false;
  unsigned elem_bytes = 1;
};

inline RawHeader parse_sidecar(const std::string& json_text, const std::string& source) {
  RawHeader h;
  try {
    const auto j = nlohmann::json::parse(json_text);
    h.rows = j.at("rows").get<std::size_t>();
    h.cols = j.at("cols").get<std::size_t>();
    h.bits = j.at("bits").get<unsigned>();
    h.is_signed = j.value("signed", false);
    h.elem_bytes = j.value("elem_bytes", 0u);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, source + ": " + e.what());
  }
  if (h.elem_bytes == 0) {
    h.elem_bytes = 1;
    while (h.elem_bytes * 8 < h.bits) h.elem_bytes *= 2;
  }
  if (h.elem_bytes != 1 && h.elem_bytes != 2 && h.elem_bytes != 4 && h.elem_bytes != 8)
    fail(ErrorKind::Format, source + ": elem_bytes must be 1, 2, 4 or 8");
  if (h.rows == 0 || h.cols == 0) fail(ErrorKind::Format, source + ": empty matrix");
  return h;
}

inline std::string make_sidecar(const RawHeader& h) {
  nlohmann::json j{{"rows", h.rows}, {"cols", h.cols}, {"bits", h.bits},
                   {"signed", h.is_signed}, {"elem_bytes", h.elem_bytes}};
  return j.dump(2) + "\n";
}

inline BitParallelMatrix decode_raw(const std::vector<std::uint8_t>& bytes, const RawHeader& h) {
  if (bytes.size() != h.rows * h.cols * h.elem_bytes)
    fail(ErrorKind::Format, "raw payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                                std::to_string(h.rows * h.cols * h.elem_bytes));
  std::vector<std::int64_t> elems(h.rows * h.cols);
  for (std::size_t i = 0; i < elems.size(); ++i) {
    std::uint64_t u = 0;
    for (unsigned b = 0; b < h.elem_bytes; ++b)
      u |= std::uint64_t{bytes[i * h.elem_bytes + b]} << (8 * b);
    if (h.is_signed && h.elem_bytes < 8 && (u >> (8 * h.elem_bytes - 1)) & 1u)
      u |= ~0ull << (8 * h.elem_bytes);
    elems[i] = static_cast<std::int64_t>(u);
  }
  return BitParallelMatrix(h.rows, h.cols, h.bits, h.is_signed, std::move(elems));
}

inline std::vector<std::uint8_t> encode_raw(const BitParallelMatrix& m, unsigned elem_bytes) {
  std::vector<std::uint8_t> out(m.rows() * m.cols() * elem_bytes);
  for (std::size_t i = 0; i < m.rows() * m.cols(); ++i) {
    const auto u = static_cast<std::uint64_t>(m.data()[i]);
    for (unsigned b = 0; b < elem_bytes; ++b)
      out[i * elem_bytes + b] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  return out;
}

/// Loads `path` with its sidecar `path + ".json"`.
inline BitParallelMatrix load_raw(const std::string& path) {
  const std::string side = path + ".json";
  return decode_raw(read_file(path), parse_sidecar(read_text(side), side));
}

// ---------------------------------------------------------------------------
// BSMX: "BSMX", version u16, rows u32, cols u32, bits u8, signed u8,
// word_width u16 (all little-endian), then plane-major payload with each row
// padded to word_width bits.

inline constexpr std::uint16_t kBsmxVersion = 1;
inline constexpr std::size_t kBsmxHeaderBytes = 4 + 2 + 4 + 4 + 1 + 1 + 2;

struct BsmxHeader {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint8_t bits = 0;
  bool is_signed = false;
  std::uint16_t word_width = 64;

  std::size_t payload_bytes() const {
    return std::size_t{bits} * rows * round_up(cols, word_width) / 8;
  }
};

namespace detail {
inline void put(std::vector<std::uint8_t>& o, std::uint64_t v, unsigned n) {
  for (unsigned i = 0; i < n; ++i) o.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint64_t get(const std::vector<std::uint8_t>& b, std::size_t at, unsigned n) {
  std::uint64_t v = 0;
  for (unsigned i = 0; i < n; ++i) v |= std::uint64_t{b[at + i]} << (8 * i);
  return v;
}
}  // namespace detail

inline std::vector<std::uint8_t> encode_bsmx(const BitParallelMatrix& m, unsigned word_width = 64) {
  if (!is_pow2(word_width) || word_width < 8 || word_width > 32768)
    fail(ErrorKind::Unsupported, "word width must be a power of two >= 8");
  if (m.rows() > 0xffffffffu || m.cols() > 0xffffffffu)
    fail(ErrorKind::Unsupported, "matrix too large for the container");
  std::vector<std::uint8_t> out{'B', 'S', 'M', 'X'};
  detail::put(out, kBsmxVersion, 2);
  detail::put(out, m.rows(), 4);
  detail::put(out, m.cols(), 4);
  detail::put(out, m.bits(), 1);
  detail::put(out, m.is_signed() ? 1 : 0, 1);
  detail::put(out, word_width, 2);
  const auto payload = pack_planes(m, word_width);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline BsmxHeader parse_bsmx_header(const std::vector<std::uint8_t>& b,
                                    const std::string& source = "<bsmx>") {
  if (b.size() < kBsmxHeaderBytes || std::memcmp(b.data(), "BSMX", 4) != 0)
    fail(ErrorKind::Format, source + ": not a BSMX file");
  if (detail::get(b, 4, 2) != kBsmxVersion)
    fail(ErrorKind::Format, source + ": unsupported BSMX version " + std::to_string(detail::get(b, 4, 2)));
  BsmxHeader h;
  h.rows = static_cast<std::uint32_t>(detail::get(b, 6, 4));
  h.cols = static_cast<std::uint32_t>(detail::get(b, 10, 4));
  h.bits = static_cast<std::uint8_t>(b[14]);
  if (b[15] > 1) fail(ErrorKind::Format, source + ": bad signed flag");
  h.is_signed = b[15] == 1;
  h.word_width = static_cast<std::uint16_t>(detail::get(b, 16, 2));
  if (h.rows == 0 || h.cols == 0 || h.bits == 0 || h.bits > kMaxBits || !is_pow2(h.word_width) ||
      h.word_width < 8)
    fail(ErrorKind::Format, source + ": invalid BSMX header");
  if (b.size() != kBsmxHeaderBytes + h.payload_bytes())
    fail(ErrorKind::Format, source + ": payload is " + std::to_string(b.size() - kBsmxHeaderBytes) +
                                " bytes, expected " + std::to_string(h.payload_bytes()));
  return h;
}

inline BitParallelMatrix decode_bsmx(const std::vector<std::uint8_t>& b,
                                     const std::string& source = "<bsmx>") {
  const auto h = parse_bsmx_header(b, source);
  return unpack_planes(std::span<const std::uint8_t>(b).subspan(kBsmxHeaderBytes), h.rows, h.cols,
                       h.bits, h.is_signed, h.word_width);
}

/// Payload bytes only, for loading into simulator memory.
inline std::vector<std::uint8_t> bsmx_payload(const std::vector<std::uint8_t>& b,
                                              const std::string& source = "<bsmx>") {
  parse_bsmx_header(b, source);
  return {b.begin() + kBsmxHeaderBytes, b.end()};
}

/// Loads a bit-parallel matrix by extension: .csv, .bsmx, anything else is
/// raw binary with a .json sidecar. `bits` applies to CSV only (0 = fit).
inline BitParallelMatrix load_matrix(const std::string& path, unsigned bits, bool is_signed) {
  auto ends_with = [&](const char* ext) {
    const std::size_t n = std::strlen(ext);
    return path.size() >= n && path.compare(path.size() - n, n, ext) == 0;
  };
  if (ends_with(".csv")) return load_csv(path, bits, is_signed);
  if (ends_with(".bsmx")) return decode_bsmx(read_file(path), path);
  return load_raw(path);
}

}  // namespace bismo::io

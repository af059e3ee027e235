#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bismo/error.hpp"

namespace bismo {

/// Flat byte-addressable main memory. Accesses are bounds-checked; reads of
/// never-written bytes yield zero and are counted.
class MemModel {
 public:
  MemModel() = default;
  explicit MemModel(std::size_t size) : bytes_(size, 0), written_(size, 0) {}

  std::size_t size() const { return bytes_.size(); }
  std::uint64_t unwritten_reads() const { return unwritten_reads_; }
  void reset_counters() { unwritten_reads_ = 0; }

  void write(std::uint64_t addr, std::span<const std::uint8_t> data) {
    check(addr, data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      bytes_[addr + i] = data[i];
      written_[addr + i] = 1;
    }
  }

  void read(std::uint64_t addr, std::span<std::uint8_t> out) const {
    check(addr, out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!written_[addr + i]) ++unwritten_reads_;
      out[i] = bytes_[addr + i];
    }
  }

  std::vector<std::uint8_t> read(std::uint64_t addr, std::size_t n) const {
    std::vector<std::uint8_t> out(n);
    read(addr, std::span<std::uint8_t>(out));
    return out;
  }

  /// Little-endian two's complement load of `nbytes` (1..8) bytes.
  std::int64_t read_int(std::uint64_t addr, unsigned nbytes) const {
    std::uint8_t buf[8] = {};
    read(addr, std::span<std::uint8_t>(buf, nbytes));
    std::uint64_t u = 0;
    for (unsigned i = 0; i < nbytes; ++i) u |= std::uint64_t{buf[i]} << (8 * i);
    if (nbytes < 8 && (u >> (8 * nbytes - 1)) & 1u) u |= ~0ull << (8 * nbytes);
    return static_cast<std::int64_t>(u);
  }

  void write_int(std::uint64_t addr, std::int64_t v, unsigned nbytes) {
    std::uint8_t buf[8];
    const auto u = static_cast<std::uint64_t>(v);
    for (unsigned i = 0; i < nbytes; ++i) buf[i] = static_cast<std::uint8_t>(u >> (8 * i));
    write(addr, std::span<const std::uint8_t>(buf, nbytes));
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  void check(std::uint64_t addr, std::size_t n) const {
    if (addr > bytes_.size() || n > bytes_.size() - addr)
      fail(ErrorKind::Range, "memory access [" + std::to_string(addr) + ", " +
                                 std::to_string(addr + n) + ") outside [0, " +
                                 std::to_string(bytes_.size()) + ")");
  }

  std::vector<std::uint8_t> bytes_;
  std::vector<std::uint8_t> written_;
  mutable std::uint64_t unwritten_reads_ = 0;
};

}  // namespace bismo

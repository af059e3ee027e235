#pragma once

#include <stdexcept>
#include <string>

namespace bismo {

enum class ErrorKind {
  Range,        // element outside the declared bit width
  Dimension,    // operand shapes do not agree
  Format,       // malformed file / text input
  Unsupported,  // precision or parameter outside what the instance supports
  Validation,   // structurally invalid program or configuration
  Capacity,     // tile does not fit on-chip buffers
  Overflow,     // accumulator overflow
  Deadlock,     // all pipeline stages blocked
  Hazard,       // buffer read/write ordering violation
  Io,           // unreadable or unwritable file
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Range: return "range";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Format: return "format";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::Overflow: return "overflow";
    case ErrorKind::Deadlock: return "deadlock";
    case ErrorKind::Hazard: return "hazard";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace bismo

#ifndef LINDEPS_ERRORS_HPP
#define LINDEPS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lindeps {

/// Failure category. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  usage = 2,
  io = 3,
  validation = 4,
  numerical = 5,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::io: return "io";
    case ErrorKind::validation: return "validation";
    case ErrorKind::numerical: return "numerical";
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

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::numerical, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

/// Distinguishes the ways an LNDP/LNDS file can be malformed.
enum class FormatFault {
  bad_magic,
  unknown_version,
  truncated,
  length_mismatch,
  bad_header,
};

inline const char* to_string(FormatFault fault) {
  switch (fault) {
    case FormatFault::bad_magic: return "bad magic";
    case FormatFault::unknown_version: return "unknown version";
    case FormatFault::truncated: return "truncated";
    case FormatFault::length_mismatch: return "length mismatch";
    case FormatFault::bad_header: return "bad header";
  }
  return "unknown";
}

class FormatError : public Error {
 public:
  FormatError(FormatFault fault, const std::string& what)
      : Error(ErrorKind::validation,
              std::string("format error (") + to_string(fault) + "): " + what),
        fault_(fault) {}

  FormatFault fault() const noexcept { return fault_; }

 private:
  FormatFault fault_;
};

}  // namespace lindeps

#endif  // LINDEPS_ERRORS_HPP

#pragma once

#include <stdexcept>
#include <string>

namespace hec {

// Broad error categories; the CLI maps each to a distinct exit code.
enum class ErrorKind {
  kInvalidArgument = 2,
  kShape = 3,
  kNumeric = 4,
  kIo = 5,
  kInfeasible = 6,
  kNotFound = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kInfeasible: return "infeasible";
    case ErrorKind::kNotFound: return "not-found";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

}  // namespace hec

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cdm {

enum class ErrorKind {
  invalid_argument,  // precondition on a call argument
  io,
  parse,
  validation,        // well-formed input that breaks a domain invariant
  dimension,
  numeric,           // NaN/Inf or an undefined numeric quantity
  unsupported,
};

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

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::invalid_argument, what);
}

/// Non-fatal findings collected by an operation. Callers decide whether to
/// print, log, or ignore them.
using Warnings = std::vector<std::string>;

}  // namespace cdm

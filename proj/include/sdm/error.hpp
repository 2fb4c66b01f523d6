#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sdm {

/// Broad failure classes. The CLI prints the category as a machine-parseable
/// prefix on its single error line.
enum class ErrorKind {
  shape,
  domain,
  numeric,
  format,
  io,
  config,
  state,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::domain: return "domain";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
    case ErrorKind::state: return "state";
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

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace sdm

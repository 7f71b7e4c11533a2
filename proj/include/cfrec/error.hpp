#pragma once

#include <stdexcept>
#include <string>

namespace cfrec {

enum class ErrorKind {
  InvalidArgument,
  Config,
  Data,
  Io,
  Numeric,
};

/// Base exception for the library. The kind drives the C API status code
/// and the CLI exit code.
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

}  // namespace cfrec

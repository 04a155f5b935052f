#pragma once

#include <stdexcept>
#include <string>

namespace reshare {

/// Invalid configuration, arguments, or input data. The CLI maps these to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input files. `line` is 1-based, 0 when not tied to a row.
class DataError : public ValidationError {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : ValidationError(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Numerical failure during fitting (divergence, iteration cap). Exit code 2.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace reshare

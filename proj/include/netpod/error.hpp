#pragma once

#include <stdexcept>
#include <string>

namespace netpod {

enum class ErrorKind {
  invalid_argument,   // precondition or contract violation
  dimension_mismatch,
  parse,              // malformed input document
  domain,             // value outside its admissible range
  unsupported,        // operation not defined for this input (e.g. directed Laplacian)
  insufficient_data,
  non_finite,
  divergence,
  rank_deficient,
  config,
  io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by parsers; carries the 1-based line of the offending input.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorKind::parse, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised when an integrator produces a non-finite state.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : Error(ErrorKind::divergence, what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace netpod

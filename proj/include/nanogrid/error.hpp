#pragma once

#include <stdexcept>
#include <string>

namespace nanogrid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the inputs was violated.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}

  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

/// The Newton-Raphson Jacobian could not be factorised (isolated bus).
class SingularSystem : public Error {
 public:
  using Error::Error;
};

/// Text input could not be parsed. Carries the source name and 1-based line.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, int line, const std::string& msg)
      : Error(source + (line > 0 ? ":" + std::to_string(line) : std::string{}) + ": " + msg),
        source_(source),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  int line() const noexcept { return line_; }

 private:
  std::string source_;
  int line_;
};

}  // namespace nanogrid

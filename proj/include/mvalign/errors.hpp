#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvalign {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed record. `line()` is 1-based; 0 when the error is not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Invariant violation. `field()` is a dotted path such as "observations[3].box".
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class DanglingReference : public Error {
 public:
  using Error::Error;
};

class NonPositiveDepth : public Error {
 public:
  using Error::Error;
};

class AllVerticesBehindCamera : public Error {
 public:
  using Error::Error;
};

class MissingScalePrediction : public Error {
 public:
  using Error::Error;
};

class NoObservations : public Error {
 public:
  using Error::Error;
};

class NonFiniteObjective : public Error {
 public:
  using Error::Error;
};

class Divergent : public Error {
 public:
  using Error::Error;
};

class NoVotes : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InfeasibleSpec : public Error {
 public:
  using Error::Error;
};

}  // namespace mvalign

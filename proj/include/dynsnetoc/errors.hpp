#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dynsnetoc {

// Invalid distribution or model parameter (non-positive rate, sigma out of range, ...).
class ParameterDomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

// Array dimensions disagree with (T, p, L).
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Not enough data for an estimator (empty graphs, too few degrees, short chains).
class InsufficientDataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A sampler or optimizer failed to produce a finite value.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; carries the 1-based offending line (0 when not line-specific).
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

// Bad configuration document or CLI override.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace dynsnetoc

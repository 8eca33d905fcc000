#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace labnoise {

// Argument outside the mathematical domain of an operation (bad ratio,
// invalid permutation, non-stochastic matrix, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed dataset file. `line` is 1-based; 0 when the problem is not tied
// to a particular line (e.g. a missing header column).
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Internally inconsistent data, e.g. manifest disagreeing with the CSV.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Metric whose denominator is zero.
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite or exploding loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using WarningHandler = std::function<void(std::string_view)>;

// Warnings go to stderr unless a handler is installed. Returns the previous
// handler so callers can restore it.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace labnoise

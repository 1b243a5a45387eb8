#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tailaudit {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invariant or precondition violation (bad distribution parameters, dimension
/// mismatches, degenerate splits...). CLI exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A configuration file failed to parse or a key violated its constraint.
/// The message always names the offending key. CLI exit code 2.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// An operation required a subgroup that is empty in the given data.
class EmptySubgroupError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A metric is undefined on the given data (e.g. AUROC on a single-label
/// group).
class UndefinedMetricError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed input file (dataset or predictions CSV). Carries the
/// 1-based line number when one applies. CLI exit code 5.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& message, std::size_t line = 0)
      : Error(line == 0 ? message : message + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// NaN or Inf encountered during numeric evaluation. CLI exit code 4.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Constrained training found no epoch satisfying the performance floor.
/// Carries the best common-group performance that was achieved. CLI exit
/// code 3.
class InfeasibilityError : public Error {
 public:
  InfeasibilityError(const std::string& message, double best_p_common)
      : Error(message), best_p_common_(best_p_common) {}
  double best_p_common() const { return best_p_common_; }

 private:
  double best_p_common_;
};

/// A bootstrap metric was undefined on more than 20% of resamples.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace tailaudit

#pragma once

#include <stdexcept>
#include <string>

namespace stugn {

/// Bad input: out-of-range arguments, schema violations, shape mismatches.
/// Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Not enough grid slots to produce at least one window in a split.
class InsufficientDataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Constant channel passed to the scaler.
class DegenerateScaleError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Runtime failure during computation (CLI exit code 2).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf produced by an operation, or a diverging loss.
class NumericError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

/// No station has data inside an imputation window.
class ImputationError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace stugn

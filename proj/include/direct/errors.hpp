#pragma once

#include <stdexcept>
#include <string>

namespace direct {

/// Input rejected by a precondition check (shape mismatch, out-of-range index, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value outside the mathematical domain of an operation (e.g. log of a nonpositive entry).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The operation does not support the structure of its argument.
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A materialization or enumeration would exceed its configured size cap.
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Inconsistent configuration (architecture, run config, degenerate hyperparameters).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problems reading or interpreting data files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite objective or gradient, accumulator overflow.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace direct

namespace direct {

/// A latent variable consumed twice, or an architecture that does not match the grid.
class AssignmentError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace direct

#pragma once

#include <stdexcept>
#include <string>

namespace idc {

/// Base of every error the engine raises. `exit_code()` follows the CLI
/// convention: 2 configuration, 3 data/integrity, 4 numeric.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Malformed or inconsistent on-disk data (weight files, manifests, PNGs).
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// Caller broke an operation's precondition (non-scalar backward, empty rows,
/// decreasing assignment fraction, mismatched branch filters).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// External teacher backend failed.
class BackendError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace idc

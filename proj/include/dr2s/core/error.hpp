#pragma once

#include <stdexcept>
#include <string>

namespace dr2s {

// Exception hierarchy. The CLI maps each family onto a process exit code:
// ConfigError -> 2, DataError (and subclasses) -> 3, NumericError -> 4.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public DataError {
 public:
  using DataError::DataError;
};

class SizeError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

/// Raised when a persisted artifact fails its checksum or header validation.
class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Correlation of a constant vector is undefined.
class UndefinedCorrelation : public NumericError {
 public:
  using NumericError::NumericError;
};

int exit_code_for(const std::exception& e);

/// Rethrows the exception in flight with "tag: " prefixed to its message,
/// keeping its class. Call only from a catch block.
[[noreturn]] void rethrow_tagged(const std::string& tag);

/// Runs `f`, tagging any library error it throws.
template <typename F>
decltype(auto) tagged(const std::string& tag, F&& f) {
  try {
    return f();
  } catch (const Error&) {
    rethrow_tagged(tag);
  }
}

}  // namespace dr2s

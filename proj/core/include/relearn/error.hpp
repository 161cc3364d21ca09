#pragma once

#include <stdexcept>
#include <string>

namespace relearn {

// Every failure the library reports derives from Error so callers can map
// categories onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between tensors, layers or sequences.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Caller supplied an invalid value (empty batch, bad label, short window).
class InputError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or received where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File or checkpoint does not have the expected layout.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Time series violates its grid invariants (duplicate or gapped timestamps).
class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& what, std::size_t row)
      : Error(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Inconsistent configuration (window longer than data, bad hyper-parameter).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An object was used out of protocol, e.g. stepping a finished episode.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A metric is undefined for the given data (zero mean, single class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace relearn

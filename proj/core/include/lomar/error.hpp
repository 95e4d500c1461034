#pragma once

#include <stdexcept>
#include <string>

namespace lomar {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or index mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed by a numeric operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range or inconsistent operation parameter.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Image file could not be parsed.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure while writing an artifact.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint file rejected on load.
class CheckpointError : public IoError {
 public:
  enum class Kind { bad_magic, version_mismatch, truncated, malformed };

  CheckpointError(Kind kind, const std::string& message) : IoError(message), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Benchmark timing could not be trusted.
class MeasurementError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value; `key()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(key + ": " + message), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace lomar

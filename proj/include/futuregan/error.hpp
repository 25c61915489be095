#pragma once

#include <stdexcept>
#include <string>

namespace futuregan {

/// Invalid configuration or argument values.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor shape does not match what an operation expects. The message names the axis.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File system, decoding or container-format failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Resuming or combining runs whose configurations disagree.
class ConfigConflictError : public std::runtime_error {
 public:
  ConfigConflictError(const std::string& what, std::string diff)
      : std::runtime_error(what), diff_(std::move(diff)) {}
  const std::string& diff() const noexcept { return diff_; }

 private:
  std::string diff_;
};

/// Checkpoint written by an incompatible format version or with a tampered config.
class IncompatibleCheckpoint : public IoError {
 public:
  using IoError::IoError;
};

/// A loss or prediction became non-finite.
class TrainingFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace futuregan

#pragma once

#include <stdexcept>
#include <string>

namespace mamaf {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents or ranks.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Invalid model/training/run configuration. Maps to CLI exit code 1.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Missing, malformed or inconsistent dataset files. Maps to CLI exit code 2.
class DataError : public Error {
public:
  using Error::Error;
};

/// NaN/Inf encountered, or a gradient check failed. Maps to CLI exit code 3.
class NumericalError : public Error {
public:
  using Error::Error;
};

class CheckpointError : public Error {
public:
  enum class Kind { io, corrupt, version, config_mismatch, shape_mismatch };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

}  // namespace mamaf

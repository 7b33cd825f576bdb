#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace genie {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;
/// Point sets are stored one point per column.
using Points = Eigen::Matrix<double, 3, Eigen::Dynamic>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad dimensions, bad config values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller passed data that violates an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed container with a version tag we do not read.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(std::int64_t epoch, const std::string& what)
      : NumericalError(what), epoch_(epoch) {}
  std::int64_t epoch() const { return epoch_; }

 private:
  std::int64_t epoch_;
};

class SamplingStarved : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace genie

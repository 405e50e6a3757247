#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pdeid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Array = Eigen::ArrayXd;

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration or arguments detected before any numerics run.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Time step violates the scheme's stability bound, or the solution blew up.
class StabilityError : public Error {
 public:
  explicit StabilityError(const std::string& msg) : Error(msg) {}
};

/// Requested a closed-form solution for a problem that has none.
class NoClosedFormError : public Error {
 public:
  explicit NoClosedFormError(const std::string& msg) : Error(msg) {}
};

/// Inconsistent or malformed data passed between pipeline stages.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

}  // namespace pdeid

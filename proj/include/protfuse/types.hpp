#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace protfuse {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Vec3 = Eigen::Vector3d;

// Error classes map onto the CLI exit codes: config 2, data 3, everything else 4.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-residue feature matrix (L rows). Shared by both encoders.
template <typename Scalar>
struct ResidueFeatures {
  Matrix<Scalar> values;

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index width() const { return values.cols(); }
};

}  // namespace protfuse

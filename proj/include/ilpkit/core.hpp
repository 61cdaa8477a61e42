/**
 * @file core.hpp
 * @brief Dense type aliases, the rank-3 tensor used for connector
 *        coefficients, and the exception hierarchy shared by all modules.
 */
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilpkit {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Rank-3 array stored as a stack of matrices: t[k](i, j).
template <typename Scalar>
using Tensor3 = std::vector<Mat<Scalar>>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class SingularMetric : public Error {
 public:
  using Error::Error;
};

class RankDeficiencyAmbiguous : public Error {
 public:
  using Error::Error;
};

class ChartEscape : public Error {
 public:
  using Error::Error;
};

class NonFiniteState : public Error {
 public:
  using Error::Error;
};

class IndefiniteCovariance : public NonFiniteState {
 public:
  using NonFiniteState::NonFiniteState;
};

class ZeroVelocity : public Error {
 public:
  using Error::Error;
};

template <typename Derived>
[[nodiscard]] bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

template <typename Scalar>
[[nodiscard]] Tensor3<Scalar> zero_tensor(Eigen::Index k, Eigen::Index rows, Eigen::Index cols) {
  return Tensor3<Scalar>(static_cast<std::size_t>(k), Mat<Scalar>::Zero(rows, cols));
}

/// Symmetric part (X + X^T) / 2.
template <typename Derived>
[[nodiscard]] Mat<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return Scalar(0.5) * (x + x.transpose());
}

inline void require(bool ok, const std::string& what) {
  if (!ok) {
    throw DimensionMismatch(what);
  }
}

}  // namespace ilpkit

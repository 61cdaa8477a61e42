/**
 * @file matrix_exp.hpp
 * @brief Matrix exponential by scaling and squaring with a diagonal [6/6]
 *        Pade approximant.
 */
#pragma once

#include <array>
#include <cmath>

#include "ilpkit/core.hpp"

namespace ilpkit {

template <typename Derived>
[[nodiscard]] Mat<typename Derived::Scalar> matrix_exp(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  using std::ceil;
  using std::log2;
  require(a.rows() == a.cols(), "matrix_exp: matrix must be square");
  const Eigen::Index n = a.rows();
  if (!a.allFinite()) {
    throw NonFiniteState("matrix_exp: non-finite input");
  }

  // c_k = (2q-k)! q! / ((2q)! k! (q-k)!) with q = 6.
  static constexpr std::array<double, 7> kPade = {
      1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0};

  const Scalar norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > Scalar(0.5)) {
    squarings = static_cast<int>(ceil(log2(norm / Scalar(0.5))));
  }
  const Mat<Scalar> scaled = a / std::pow(Scalar(2), squarings);

  const Mat<Scalar> ident = Mat<Scalar>::Identity(n, n);
  Mat<Scalar> even = Scalar(kPade[0]) * ident;
  Mat<Scalar> odd = Scalar(kPade[1]) * scaled;
  Mat<Scalar> power = scaled;
  for (int k = 2; k <= 6; ++k) {
    power = (power * scaled).eval();
    if (k % 2 == 0) {
      even += Scalar(kPade[k]) * power;
    } else {
      odd += Scalar(kPade[k]) * power;
    }
  }
  const Mat<Scalar> numer = even + odd;
  const Mat<Scalar> denom = even - odd;
  Mat<Scalar> result = denom.partialPivLu().solve(numer);
  for (int s = 0; s < squarings; ++s) {
    result = (result * result).eval();
  }
  return result;
}

}  // namespace ilpkit

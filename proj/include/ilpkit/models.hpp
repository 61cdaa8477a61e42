/**
 * @file models.hpp
 * @brief Built-in diffusion models with analytic intrinsic fields.
 */
#pragma once

#include <cmath>
#include <string>

#include "ilpkit/core.hpp"
#include "ilpkit/flow.hpp"
#include "ilpkit/geometry.hpp"
#include "ilpkit/mc.hpp"

namespace ilpkit::models {

template <typename Scalar>
struct BuiltinModel {
  std::string name;
  ModelSpec<Scalar> model;
  VectorFieldSpec<Scalar> field;
  MapSpec<Scalar> map;
  mc::Projector<Scalar> projector;
};

/// dX = -kappa X dt + s dW in one dimension; g = 1/s^2.
template <typename Scalar>
[[nodiscard]] BuiltinModel<Scalar> scalar_ou(Scalar kappa, Scalar s) {
  BuiltinModel<Scalar> b;
  b.name = "scalar-ou";
  auto& m = b.model;
  m.dim = 1;
  m.drift = [kappa](const Vec<Scalar>& x) { return Vec<Scalar>(-kappa * x); };
  m.diffusion = [s](const Vec<Scalar>&) { return Mat<Scalar>::Constant(1, 1, s); };
  const Scalar g = s != Scalar(0) ? Scalar(1) / (s * s) : Scalar(1);
  m.metric = [g](const Vec<Scalar>&) { return Mat<Scalar>::Constant(1, 1, g); };
  b.field.provenance = Provenance::Analytic;
  b.field.xi = m.drift;
  b.field.d_xi = [kappa](const Vec<Scalar>&) { return Mat<Scalar>::Constant(1, 1, -kappa); };
  b.field.d2_xi_apply = [](const Vec<Scalar>&, const Mat<Scalar>&) { return Vec<Scalar>::Zero(1); };
  b.map = euclidean_inclusion<Scalar>(1);
  return b;
}

/// xi(x) = A x with constant sigma; the metric is alpha^{-1} when alpha is
/// invertible and the identity otherwise. Gamma = 0.
template <typename Scalar>
[[nodiscard]] BuiltinModel<Scalar> linear_gaussian(const Mat<Scalar>& a, const Mat<Scalar>& sigma) {
  require(a.rows() == a.cols() && sigma.rows() == a.rows(), "linear_gaussian: shape mismatch");
  BuiltinModel<Scalar> b;
  b.name = "linear-gaussian";
  auto& m = b.model;
  m.dim = a.rows();
  m.drift = [a](const Vec<Scalar>& x) { return Vec<Scalar>(a * x); };
  m.diffusion = [sigma](const Vec<Scalar>&) { return sigma; };
  const Mat<Scalar> alpha_m = sigma * sigma.transpose();
  const Eigen::FullPivLU<Mat<Scalar>> lu(alpha_m);
  const Mat<Scalar> g = lu.isInvertible() ? symmetrized(Mat<Scalar>(lu.inverse())) : Mat<Scalar>::Identity(m.dim, m.dim);
  m.metric = [g](const Vec<Scalar>&) { return g; };
  b.field.provenance = Provenance::Analytic;
  b.field.xi = m.drift;
  b.field.d_xi = [a](const Vec<Scalar>&) { return a; };
  const Eigen::Index p = m.dim;
  b.field.d2_xi_apply = [p](const Vec<Scalar>&, const Mat<Scalar>&) { return Vec<Scalar>::Zero(p); };
  b.map = euclidean_inclusion<Scalar>(p);
  return b;
}

template <typename Scalar>
[[nodiscard]] Mat<Scalar> default_linear_drift() {
  Mat<Scalar> a(2, 2);
  a << Scalar(-0.5), Scalar(1), Scalar(-1), Scalar(-0.5);
  return a;
}

template <typename Scalar>
[[nodiscard]] Mat<Scalar> default_linear_diffusion() {
  Mat<Scalar> s(2, 2);
  s << Scalar(0.3), Scalar(0), Scalar(0.1), Scalar(0.2);
  return s;
}

/// Planar OU dY = -kappa Y dt + s dW written in polar coordinates (r, theta):
///   dr = (-kappa r + s^2 / (2r)) dt + s dW_r,  dtheta = (s / r) dW_theta,
/// g = s^{-2} diag(1, r^2). Gamma^r_thth = -r, Gamma^th_rth = 1/r, and the
/// intrinsic field is xi = (-kappa r, 0). psi is the identity with the same
/// connector on the target.
template <typename Scalar>
[[nodiscard]] BuiltinModel<Scalar> polar_demo(Scalar kappa, Scalar s) {
  require(s > Scalar(0), "polar_demo: noise scale must be positive");
  BuiltinModel<Scalar> b;
  b.name = "polar-demo";
  auto& m = b.model;
  m.dim = 2;
  m.drift = [kappa, s](const Vec<Scalar>& x) {
    Vec<Scalar> d(2);
    d << -kappa * x(0) + s * s / (Scalar(2) * x(0)), Scalar(0);
    return d;
  };
  m.diffusion = [s](const Vec<Scalar>& x) {
    Mat<Scalar> sig = Mat<Scalar>::Zero(2, 2);
    sig(0, 0) = s;
    sig(1, 1) = s / x(0);
    return sig;
  };
  const Scalar inv_s2 = Scalar(1) / (s * s);
  m.metric = [inv_s2](const Vec<Scalar>& x) {
    Mat<Scalar> g = Mat<Scalar>::Zero(2, 2);
    g(0, 0) = inv_s2;
    g(1, 1) = inv_s2 * x(0) * x(0);
    return g;
  };
  m.metric_derivative = [inv_s2](const Vec<Scalar>& x) {
    Tensor3<Scalar> d = zero_tensor<Scalar>(2, 2, 2);
    d[0](1, 1) = Scalar(2) * inv_s2 * x(0);
    return d;
  };
  m.alpha_derivative = [s](const Vec<Scalar>& x) {
    Tensor3<Scalar> d = zero_tensor<Scalar>(2, 2, 2);
    d[0](1, 1) = Scalar(-2) * s * s / (x(0) * x(0) * x(0));
    return d;
  };
  b.field.provenance = Provenance::Analytic;
  b.field.xi = [kappa](const Vec<Scalar>& x) {
    Vec<Scalar> d(2);
    d << -kappa * x(0), Scalar(0);
    return d;
  };
  b.field.d_xi = [kappa](const Vec<Scalar>&) {
    Mat<Scalar> j = Mat<Scalar>::Zero(2, 2);
    j(0, 0) = -kappa;
    return j;
  };
  b.field.d2_xi_apply = [](const Vec<Scalar>&, const Mat<Scalar>&) { return Vec<Scalar>::Zero(2); };
  b.map = identity_map(m);
  return b;
}

/// One-dimensional xi(x) = -x^2 with unit noise and flat metric.
template <typename Scalar>
[[nodiscard]] BuiltinModel<Scalar> quadratic_decay() {
  BuiltinModel<Scalar> b;
  b.name = "quadratic-decay";
  auto& m = b.model;
  m.dim = 1;
  m.drift = [](const Vec<Scalar>& x) { return Vec<Scalar>(-x.cwiseProduct(x)); };
  m.diffusion = [](const Vec<Scalar>&) { return Mat<Scalar>::Identity(1, 1); };
  m.metric = [](const Vec<Scalar>&) { return Mat<Scalar>::Identity(1, 1); };
  m.analytic_connector = [](const Vec<Scalar>& x) { return Connector<Scalar>{zero_tensor<Scalar>(1, 1, 1), x}; };
  b.field.provenance = Provenance::Analytic;
  b.field.xi = m.drift;
  b.field.d_xi = [](const Vec<Scalar>& x) { return Mat<Scalar>::Constant(1, 1, Scalar(-2) * x(0)); };
  b.field.d2_xi_apply = [](const Vec<Scalar>&, const Mat<Scalar>& t) { return Vec<Scalar>::Constant(1, Scalar(-2) * t(0, 0)); };
  b.map = euclidean_inclusion<Scalar>(1);
  return b;
}

}  // namespace ilpkit::models

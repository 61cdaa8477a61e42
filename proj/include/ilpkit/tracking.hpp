/**
 * @file tracking.hpp
 * @brief Constant-speed target tracking on TS^2 in R^6: state x = (v, a) with
 *        v.a = 0 and |v| fixed, acceleration driven by projected noise.
 *
 *   dV = A dt
 *   dA = (-rho(X) V - lambda P(V) A) dt + gamma P(V) dW,   rho = |a|^2 / |v|^2
 *
 * The metric gamma^{-2} I_6 is a generalized inverse of alpha because P is a
 * projection, and Gamma(alpha) = 0, so the drift equals the intrinsic field.
 */
#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "ilpkit/core.hpp"
#include "ilpkit/flow.hpp"
#include "ilpkit/geometry.hpp"
#include "ilpkit/ilp.hpp"
#include "ilpkit/matrix_exp.hpp"

namespace ilpkit::tracking {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar>
struct TS2State {
  Vec3<Scalar> v;  // m/s
  Vec3<Scalar> a;  // m/s^2

  [[nodiscard]] Vec<Scalar> stacked() const {
    Vec<Scalar> x(6);
    x << v, a;
    return x;
  }
  [[nodiscard]] static TS2State from(const Vec<Scalar>& x) {
    require(x.size() == 6, "TS2State: expected a 6-vector");
    return {x.template head<3>(), x.template tail<3>()};
  }
};

template <typename Scalar>
struct TrackingParams {
  Scalar lambda_damping = Scalar(0.5);  // 1/s
  Scalar gamma_noise = Scalar(5.2e3);   // m/s^2 per sqrt(s)
  Scalar speed = Scalar(200);           // m/s
};

namespace detail {

template <typename Scalar>
Scalar speed_sq(const Vec3<Scalar>& v) {
  const Scalar n2 = v.squaredNorm();
  if (!(n2 > Scalar(0))) {
    throw ZeroVelocity("tracking: velocity is zero");
  }
  return n2;
}

}  // namespace detail

/// P(v) = I - v v^T / |v|^2.
template <typename Scalar>
[[nodiscard]] Mat3<Scalar> proj_perp(const Vec3<Scalar>& v) {
  const Scalar n2 = detail::speed_sq(v);
  return Mat3<Scalar>::Identity() - v * v.transpose() / n2;
}

template <typename Scalar>
[[nodiscard]] Scalar rho(const TS2State<Scalar>& x) {
  return x.a.squaredNorm() / detail::speed_sq(x.v);
}

/// xi(x) = (a, -rho v - lambda P(v) a).
template <typename Scalar>
[[nodiscard]] Vec<Scalar> xi_tracking(const TS2State<Scalar>& x, const TrackingParams<Scalar>& p) {
  Vec<Scalar> out(6);
  out << x.a, -rho(x) * x.v - p.lambda_damping * (proj_perp(x.v) * x.a);
  return out;
}

/// D xi on the constraint set: [0, I; lambda Q - rho I, -lambda P - 2Q],
/// Q = v a^T / |v|^2.
template <typename Scalar>
[[nodiscard]] Mat<Scalar> dxi_tracking(const TS2State<Scalar>& x, const TrackingParams<Scalar>& p) {
  const Scalar n2 = detail::speed_sq(x.v);
  const Mat3<Scalar> q = x.v * x.a.transpose() / n2;
  const Mat3<Scalar> eye = Mat3<Scalar>::Identity();
  Mat<Scalar> out = Mat<Scalar>::Zero(6, 6);
  out.template block<3, 3>(0, 3) = eye;
  out.template block<3, 3>(3, 0) = p.lambda_damping * q - rho(x) * eye;
  out.template block<3, 3>(3, 3) = -p.lambda_damping * proj_perp(x.v) - Scalar(2) * q;
  return out;
}

/// D^2 xi(x)(chi) = -2/|v|^2 (0, Tr(chi_aa) v + (chi_va + chi_av) a).
template <typename Scalar>
[[nodiscard]] Vec<Scalar> d2xi_apply_tracking(const TS2State<Scalar>& x, const Mat<Scalar>& chi) {
  require(chi.rows() == 6 && chi.cols() == 6, "d2xi_apply_tracking: expected a 6x6 tensor");
  const Scalar n2 = detail::speed_sq(x.v);
  const Mat3<Scalar> chi_va = chi.template block<3, 3>(0, 3);
  const Mat3<Scalar> chi_av = chi.template block<3, 3>(3, 0);
  const Scalar tr_aa = chi.template block<3, 3>(3, 3).trace();
  Vec<Scalar> out = Vec<Scalar>::Zero(6);
  out.template tail<3>() = (Scalar(-2) / n2) * (tr_aa * x.v + (chi_va + chi_av) * x.a);
  return out;
}

/// Polarized connector on constraint-tangent vectors:
/// Gamma(zeta, eta) = 1/(2|v|^2) ( zeta_a (eta_a.v) + eta_a (zeta_a.v),
///                                -zeta_v (eta_a.v) - eta_v (zeta_a.v) ).
template <typename Scalar>
[[nodiscard]] Vec<Scalar> connector_tracking(const TS2State<Scalar>& x, const Vec<Scalar>& zeta, const Vec<Scalar>& eta) {
  require(zeta.size() == 6 && eta.size() == 6, "connector_tracking: expected 6-vectors");
  const Scalar n2 = detail::speed_sq(x.v);
  const Vec3<Scalar> zv = zeta.template head<3>(), za = zeta.template tail<3>();
  const Vec3<Scalar> ev = eta.template head<3>(), ea = eta.template tail<3>();
  const Scalar za_v = za.dot(x.v), ea_v = ea.dot(x.v);
  Vec<Scalar> out(6);
  out << (za * ea_v + ea * za_v) / (Scalar(2) * n2), -(zv * ea_v + ev * za_v) / (Scalar(2) * n2);
  return out;
}

/// Full coefficient stack of the tracking connector, Gamma^k_ij = Gamma(e_i, e_j)^k.
template <typename Scalar>
[[nodiscard]] Connector<Scalar> connector_coeffs_tracking(const TS2State<Scalar>& x) {
  Connector<Scalar> c;
  c.point = x.stacked();
  c.coeffs = zero_tensor<Scalar>(6, 6, 6);
  const Mat<Scalar> eye = Mat<Scalar>::Identity(6, 6);
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (Eigen::Index j = i; j < 6; ++j) {
      const Vec<Scalar> val = connector_tracking<Scalar>(x, eye.col(i), eye.col(j));
      for (Eigen::Index k = 0; k < 6; ++k) {
        c.coeffs[static_cast<std::size_t>(k)](i, j) = val(k);
        c.coeffs[static_cast<std::size_t>(k)](j, i) = val(k);
      }
    }
  }
  return c;
}

/// Rescale v to `speed`, then project a onto the plane orthogonal to the new v.
template <typename Scalar>
[[nodiscard]] TS2State<Scalar> project_constraints(const TS2State<Scalar>& x, Scalar speed) {
  const Scalar n2 = detail::speed_sq(x.v);
  TS2State<Scalar> out;
  out.v = x.v * (speed / std::sqrt(n2));
  out.a = proj_perp(out.v) * x.a;
  return out;
}

/// v uniform on the sphere of radius `speed`, a uniform on the circle of
/// radius `accel` in the plane orthogonal to v.
template <typename Scalar, typename Rng>
[[nodiscard]] TS2State<Scalar> sample_state(Scalar speed, Scalar accel, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3<Scalar> dir;
  do {
    dir << Scalar(normal(rng)), Scalar(normal(rng)), Scalar(normal(rng));
  } while (dir.norm() < Scalar(1e-8));
  dir.normalize();
  // Orthonormal basis of the plane orthogonal to dir.
  Vec3<Scalar> helper = std::abs(dir.x()) < Scalar(0.9) ? Vec3<Scalar>::UnitX() : Vec3<Scalar>::UnitY();
  const Vec3<Scalar> e1 = dir.cross(helper).normalized();
  const Vec3<Scalar> e2 = dir.cross(e1);
  std::uniform_real_distribution<double> unif(0.0, 2.0 * std::numbers::pi);
  const Scalar angle = Scalar(unif(rng));
  TS2State<Scalar> s;
  s.v = speed * dir;
  s.a = accel * (std::cos(angle) * e1 + std::sin(angle) * e2);
  return s;
}

template <typename Scalar>
struct TrackingModel {
  ModelSpec<Scalar> model;
  VectorFieldSpec<Scalar> field;
  std::function<Vec<Scalar>(const Vec<Scalar>&)> projector;
  MapSpec<Scalar> inclusion;
  TrackingParams<Scalar> params;
};

/// Wires the tracking dynamics into the generic interfaces. sigma is 6x3
/// (three noise channels); g = gamma^{-2} I_6.
template <typename Scalar>
[[nodiscard]] TrackingModel<Scalar> tracking_model(const TrackingParams<Scalar>& p) {
  TrackingModel<Scalar> t;
  t.params = p;
  auto& m = t.model;
  m.dim = 6;
  m.drift = [p](const Vec<Scalar>& x) { return xi_tracking(TS2State<Scalar>::from(x), p); };
  m.diffusion = [p](const Vec<Scalar>& x) {
    Mat<Scalar> s = Mat<Scalar>::Zero(6, 3);
    s.template block<3, 3>(3, 0) = p.gamma_noise * proj_perp<Scalar>(x.template head<3>());
    return s;
  };
  const Scalar g_scale = p.gamma_noise > Scalar(0) ? Scalar(1) / (p.gamma_noise * p.gamma_noise) : Scalar(1);
  m.metric = [g_scale](const Vec<Scalar>&) { return Mat<Scalar>(g_scale * Mat<Scalar>::Identity(6, 6)); };
  m.analytic_connector = [](const Vec<Scalar>& x) { return connector_coeffs_tracking(TS2State<Scalar>::from(x)); };

  t.field.provenance = Provenance::Analytic;
  t.field.xi = m.drift;
  t.field.d_xi = [p](const Vec<Scalar>& x) { return dxi_tracking(TS2State<Scalar>::from(x), p); };
  t.field.d2_xi_apply = [](const Vec<Scalar>& x, const Mat<Scalar>& chi) {
    return d2xi_apply_tracking(TS2State<Scalar>::from(x), chi);
  };
  t.projector = [p](const Vec<Scalar>& x) { return project_constraints(TS2State<Scalar>::from(x), p.speed).stacked(); };
  t.inclusion = euclidean_inclusion<Scalar>(6);
  return t;
}

/// Specialized recursion for Sigma_0 = 0 and psi the inclusion into R^6:
///   tau  = exp(dt/2 [D xi(x_u) + D xi(x_t)])
///   chi_t = dt/2 alpha(x_t) + tau [chi_u + dt/2 alpha(x_u)] tau^T
///   m_t  = tau [m_u + dt/2 H_u] + dt/2 H_t,
///   H_t  = -1/|v_0|^2 (0, Tr(chi_aa) v_t + (chi_va + chi_av) a_t).
/// The projected estimate is x_t + m_t.
template <typename Scalar>
[[nodiscard]] ILPResult<Scalar> ilp_tracking(const TS2State<Scalar>& x0, const TrackingParams<Scalar>& p, Scalar delta, int n) {
  require(delta > Scalar(0) && n >= 1, "ilp_tracking: need delta > 0 and n >= 1");
  const TrackingModel<Scalar> tm = tracking_model(p);
  const FlowGrid<Scalar> grid = integrate_flow(tm.field, x0.stacked(), delta, n);
  const Scalar v0_sq = detail::speed_sq(x0.v);

  auto alpha_at = [&p](const Vec<Scalar>& x) {
    Mat<Scalar> a = Mat<Scalar>::Zero(6, 6);
    a.template block<3, 3>(3, 3) = p.gamma_noise * p.gamma_noise * proj_perp<Scalar>(x.template head<3>());
    return a;
  };
  auto h_at = [v0_sq](const Vec<Scalar>& x, const Mat<Scalar>& chi) {
    const Mat3<Scalar> chi_va = chi.template block<3, 3>(0, 3);
    const Mat3<Scalar> chi_av = chi.template block<3, 3>(3, 0);
    Vec<Scalar> h = Vec<Scalar>::Zero(6);
    h.template tail<3>() = (Scalar(-1) / v0_sq) * (chi.template block<3, 3>(3, 3).trace() * x.template head<3>() +
                                                   (chi_va + chi_av) * x.template tail<3>());
    return h;
  };

  ILPResult<Scalar> out;
  Mat<Scalar> chi = Mat<Scalar>::Zero(6, 6);
  Vec<Scalar> m = Vec<Scalar>::Zero(6);
  Vec<Scalar> h_prev = h_at(grid.points[0], chi);
  out.integrand_trace.push_back(h_prev);
  out.accumulated.push_back(m);
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    const Vec<Scalar>& xu = grid.points[i];
    const Vec<Scalar>& xt = grid.points[i + 1];
    const Scalar half = Scalar(0.5) * (grid.times[i + 1] - grid.times[i]);
    const Mat<Scalar> tau = matrix_exp(Mat<Scalar>(
        half * (dxi_tracking(TS2State<Scalar>::from(xu), p) + dxi_tracking(TS2State<Scalar>::from(xt), p))));
    chi = symmetrized(Mat<Scalar>(half * alpha_at(xt) + tau * (chi + half * alpha_at(xu)) * tau.transpose()));
    const Vec<Scalar> h_next = h_at(xt, chi);
    m = tau * (m + half * h_prev) + half * h_next;
    if (!m.allFinite() || !chi.allFinite()) {
      throw NonFiniteState("ilp_tracking: non-finite state at step " + std::to_string(i + 1));
    }
    out.integrand_trace.push_back(h_next);
    out.accumulated.push_back(m);
    h_prev = h_next;
  }
  for (std::size_t i = 0; i <= grid.steps(); ++i) {
    out.tangent_series.push_back(out.accumulated[i]);
    out.base_series.push_back(grid.points[i]);
    out.projected_series.push_back(grid.points[i] + out.accumulated[i]);
  }
  out.tangent = out.tangent_series.back();
  out.base_point = out.base_series.back();
  out.projected = out.projected_series.back();
  return out;
}

}  // namespace ilpkit::tracking

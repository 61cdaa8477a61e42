// Independent reference computations used only by the tests. Nothing here
// calls into the library routines it is used to check.
#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd alpha_loops(const MatrixXd& sigma) {
  MatrixXd a = MatrixXd::Zero(sigma.rows(), sigma.rows());
  for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
    for (Eigen::Index k = 0; k < sigma.rows(); ++k) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < sigma.cols(); ++j) {
        acc += sigma(i, j) * sigma(k, j);
      }
      a(i, k) = acc;
    }
  }
  return a;
}

inline VectorXd contract_loops(const std::vector<MatrixXd>& coeffs, const MatrixXd& t) {
  VectorXd out = VectorXd::Zero(static_cast<Eigen::Index>(coeffs.size()));
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) {
        out(static_cast<Eigen::Index>(k)) += coeffs[k](i, j) * t(i, j);
      }
    }
  }
  return out;
}

/// Eigen's scaling-and-squaring Pade exponential (unsupported module).
inline MatrixXd expm(const MatrixXd& a) { return a.exp(); }

/// Classical Levi-Civita symbols from g and dg[m](i,j) = d_m g_ij.
inline std::vector<MatrixXd> levi_civita(const MatrixXd& g, const std::vector<MatrixXd>& dg) {
  const Eigen::Index p = g.rows();
  const MatrixXd ginv = g.inverse();
  std::vector<MatrixXd> out(static_cast<std::size_t>(p), MatrixXd::Zero(p, p));
  for (Eigen::Index s = 0; s < p; ++s) {
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) {
          acc += 0.5 * ginv(s, k) *
                 (dg[static_cast<std::size_t>(i)](j, k) + dg[static_cast<std::size_t>(j)](i, k) -
                  dg[static_cast<std::size_t>(k)](i, j));
        }
        out[static_cast<std::size_t>(s)](i, j) = acc;
      }
    }
  }
  return out;
}

/// Flat-plane Christoffel symbols in polar coordinates (r, theta).
inline std::vector<MatrixXd> polar_christoffel(double r) {
  std::vector<MatrixXd> out(2, MatrixXd::Zero(2, 2));
  out[0](1, 1) = -r;
  out[1](0, 1) = 1.0 / r;
  out[1](1, 0) = 1.0 / r;
  return out;
}

inline Eigen::Vector2d polar_to_cartesian(const Eigen::Vector2d& p) {
  return {p(0) * std::cos(p(1)), p(0) * std::sin(p(1))};
}

inline Eigen::Vector2d cartesian_to_polar(const Eigen::Vector2d& c) {
  return {c.norm(), std::atan2(c(1), c(0))};
}

/// Polar chart velocity (rdot, thetadot) at (r, theta) -> Cartesian velocity.
inline Eigen::Vector2d polar_velocity_to_cartesian(const Eigen::Vector2d& p, const Eigen::Vector2d& v) {
  const double c = std::cos(p(1)), s = std::sin(p(1));
  return {c * v(0) - p(0) * s * v(1), s * v(0) + p(0) * c * v(1)};
}

/// Fine-step RK4 for d tau/dt = A(t) tau over [t0, t1].
inline MatrixXd tau_ode(const std::function<MatrixXd(double)>& a_of_t, double t0, double t1, int steps) {
  const Eigen::Index p = a_of_t(t0).rows();
  MatrixXd tau = MatrixXd::Identity(p, p);
  const double h = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * h;
    const MatrixXd k1 = a_of_t(t) * tau;
    const MatrixXd k2 = a_of_t(t + 0.5 * h) * (tau + 0.5 * h * k1);
    const MatrixXd k3 = a_of_t(t + 0.5 * h) * (tau + 0.5 * h * k2);
    const MatrixXd k4 = a_of_t(t + h) * (tau + h * k3);
    tau += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return tau;
}

/// Scalar OU dX = -kappa X dt + s dW.
inline double ou_mean(double x0, double kappa, double t) { return x0 * std::exp(-kappa * t); }
inline double ou_variance(double s, double kappa, double t) {
  return s * s * (1.0 - std::exp(-2.0 * kappa * t)) / (2.0 * kappa);
}

/// Tangent ILP of xi(x) = -x^2, unit noise, x0 = 1, Sigma_0 = 0, horizon d:
/// x_t = 1/(1+t), tau_t^d = ((1+t)/(1+d))^2, chi_t = ((1+t)^5 - 1)/(5(1+t)^4),
/// ILP = 1/2 int_0^d tau_t^d (-2) chi_t dt
///     = -1/(5(1+d)^2) [((1+d)^4 - 1)/4 + 1/(1+d) - 1].
inline double quadratic_decay_ilp(double d) {
  const double e = 1.0 + d;
  return -1.0 / (5.0 * e * e) * ((std::pow(e, 4) - 1.0) / 4.0 + 1.0 / e - 1.0);
}

}  // namespace oracle

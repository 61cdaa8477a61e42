/**
 * @file flow.hpp
 * @brief The intrinsic drift field xi = b + 1/2 Gamma(alpha), its flow on a
 *        uniform grid, and the derivative flow tau_s^t.
 */
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ilpkit/core.hpp"
#include "ilpkit/geometry.hpp"
#include "ilpkit/matrix_exp.hpp"

namespace ilpkit {

enum class Provenance { Analytic, FiniteDifference };

template <typename Scalar>
struct VectorFieldSpec {
  using Point = Vec<Scalar>;

  std::function<Vec<Scalar>(const Point&)> xi;
  std::function<Mat<Scalar>(const Point&)> d_xi;
  /// D^2 xi(x)(T) = sum_ij T^ij d_i d_j xi(x).
  std::function<Vec<Scalar>(const Point&, const Mat<Scalar>&)> d2_xi_apply;
  Provenance provenance = Provenance::FiniteDifference;
};

/// Uniform time grid with flow points and derivative-flow matrices.
/// tau_step[i] = tau_{t_i}^{t_{i+1}}, tau_to_end[i] = tau_{t_i}^{delta},
/// tau_from_start[i] = tau_0^{t_i}.
template <typename Scalar>
struct FlowGrid {
  std::vector<Scalar> times;
  std::vector<Vec<Scalar>> points;
  std::vector<Mat<Scalar>> tau_step;
  std::vector<Mat<Scalar>> tau_to_end;
  std::vector<Mat<Scalar>> tau_from_start;

  [[nodiscard]] std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
  [[nodiscard]] Scalar dt() const { return times.size() < 2 ? Scalar(0) : times[1] - times[0]; }
  [[nodiscard]] Eigen::Index dim() const { return points.empty() ? 0 : points.front().size(); }
  [[nodiscard]] bool has_tau() const { return tau_step.size() == steps() && !tau_to_end.empty(); }

  /// tau_{t_i}^{t_j} for i <= j, composed from the per-step matrices.
  [[nodiscard]] Mat<Scalar> transport(std::size_t i, std::size_t j) const {
    require(i <= j && j < times.size(), "FlowGrid::transport: need i <= j within the grid");
    Mat<Scalar> out = Mat<Scalar>::Identity(dim(), dim());
    for (std::size_t k = i; k < j; ++k) {
      out = (tau_step[k] * out).eval();
    }
    return out;
  }
};

/// Fourth-order central differences for D xi; directional fourth-order
/// second differences along the eigenvectors of T for D^2 xi(T).
template <typename Scalar>
[[nodiscard]] VectorFieldSpec<Scalar> fd_vectorfield(std::function<Vec<Scalar>(const Vec<Scalar>&)> xi, Scalar fd_step) {
  VectorFieldSpec<Scalar> vf;
  vf.provenance = Provenance::FiniteDifference;
  vf.xi = xi;
  vf.d_xi = [xi, fd_step](const Vec<Scalar>& x) {
    const Tensor3<Scalar> cols = detail::central_jacobian<Scalar>(
        [&xi](const Vec<Scalar>& y) -> Mat<Scalar> { return xi(y); }, x, fd_step);
    const Eigen::Index p = x.size();
    Mat<Scalar> jac(cols.empty() ? 0 : cols.front().rows(), p);
    for (Eigen::Index m = 0; m < p; ++m) {
      jac.col(m) = cols[static_cast<std::size_t>(m)].col(0);
    }
    return jac;
  };
  vf.d2_xi_apply = [xi, fd_step](const Vec<Scalar>& x, const Mat<Scalar>& t) {
    using std::sqrt;
    const Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(symmetrized(t));
    const Scalar scale = std::max(Scalar(1), x.cwiseAbs().maxCoeff());
    const Scalar h = sqrt(fd_step) * scale;
    const Vec<Scalar> f0 = xi(x);
    Vec<Scalar> out = Vec<Scalar>::Zero(f0.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const Scalar lam = eig.eigenvalues()(k);
      if (lam == Scalar(0)) {
        continue;
      }
      const Vec<Scalar> u = eig.eigenvectors().col(k);
      const Vec<Scalar> near = (xi(x + h * u) - f0) + (xi(x - h * u) - f0);
      const Vec<Scalar> far = (xi(x + 2 * h * u) - f0) + (xi(x - 2 * h * u) - f0);
      const Vec<Scalar> second = (Scalar(16) * near - far) / (Scalar(12) * h * h);
      out += lam * second;
    }
    return out;
  };
  return vf;
}

/// Intrinsic drift xi^k = b^k + 1/2 sum_ij alpha^ij Gamma^k_ij, with
/// finite-difference derivatives.
template <typename Scalar>
[[nodiscard]] VectorFieldSpec<Scalar> xi_from_model(const ModelSpec<Scalar>& model) {
  std::function<Vec<Scalar>(const Vec<Scalar>&)> xi = [model](const Vec<Scalar>& x) -> Vec<Scalar> {
    return model.drift(x) + Scalar(0.5) * connector_apply(connector(model, x), alpha(model, x));
  };
  return fd_vectorfield<Scalar>(xi, model.fd_step);
}

/// Classical RK4 for xdot = xi(x) on a uniform grid of n steps over [0, delta].
template <typename Scalar>
[[nodiscard]] FlowGrid<Scalar> integrate_flow(const VectorFieldSpec<Scalar>& vf, const Vec<Scalar>& x0, Scalar delta, int n) {
  require(delta > Scalar(0), "integrate_flow: delta must be positive");
  require(n >= 1, "integrate_flow: need at least one step");
  FlowGrid<Scalar> grid;
  const Scalar h = delta / Scalar(n);
  grid.times.reserve(static_cast<std::size_t>(n) + 1);
  grid.points.reserve(static_cast<std::size_t>(n) + 1);
  grid.times.push_back(Scalar(0));
  grid.points.push_back(x0);
  Vec<Scalar> x = x0;
  for (int i = 0; i < n; ++i) {
    const Vec<Scalar> k1 = vf.xi(x);
    const Vec<Scalar> k2 = vf.xi(x + Scalar(0.5) * h * k1);
    const Vec<Scalar> k3 = vf.xi(x + Scalar(0.5) * h * k2);
    const Vec<Scalar> k4 = vf.xi(x + h * k3);
    x += h / Scalar(6) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
    if (!x.allFinite()) {
      throw NonFiniteState("integrate_flow: non-finite state at step " + std::to_string(i + 1));
    }
    grid.times.push_back(i + 1 == n ? delta : h * Scalar(i + 1));
    grid.points.push_back(x);
  }
  return grid;
}

/// Per-step tau = exp(dt/2 [D xi(x_i) + D xi(x_{i+1})]), accumulated into
/// tau_to_end (right to left) and tau_from_start (left to right).
template <typename Scalar>
[[nodiscard]] FlowGrid<Scalar> derivative_flow(const VectorFieldSpec<Scalar>& vf, FlowGrid<Scalar> grid) {
  const std::size_t n = grid.steps();
  require(n >= 1, "derivative_flow: grid has no steps");
  const Eigen::Index p = grid.dim();
  std::vector<Mat<Scalar>> jac;
  jac.reserve(n + 1);
  for (const auto& x : grid.points) {
    jac.push_back(vf.d_xi(x));
  }
  grid.tau_step.clear();
  grid.tau_step.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar dt = grid.times[i + 1] - grid.times[i];
    Mat<Scalar> step = matrix_exp(Mat<Scalar>(Scalar(0.5) * dt * (jac[i] + jac[i + 1])));
    if (!step.allFinite()) {
      throw NonFiniteState("derivative_flow: non-finite tau at step " + std::to_string(i));
    }
    grid.tau_step.push_back(std::move(step));
  }
  grid.tau_to_end.assign(n + 1, Mat<Scalar>::Identity(p, p));
  for (std::size_t i = n; i-- > 0;) {
    grid.tau_to_end[i] = grid.tau_to_end[i + 1] * grid.tau_step[i];
  }
  grid.tau_from_start.assign(n + 1, Mat<Scalar>::Identity(p, p));
  for (std::size_t i = 0; i < n; ++i) {
    grid.tau_from_start[i + 1] = grid.tau_step[i] * grid.tau_from_start[i];
  }
  return grid;
}

/// Convenience: flow points and derivative flow in one call.
template <typename Scalar>
[[nodiscard]] FlowGrid<Scalar> solve_flow(const VectorFieldSpec<Scalar>& vf, const Vec<Scalar>& x0, Scalar delta, int n) {
  return derivative_flow(vf, integrate_flow(vf, x0, delta, n));
}

}  // namespace ilpkit

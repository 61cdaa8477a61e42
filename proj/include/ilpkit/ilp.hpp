/**
 * @file ilp.hpp
 * @brief Covariance propagation along the flow and the approximate intrinsic
 *        location parameter (ILP) of psi(X_delta), with exponential-map
 *        projection onto the target.
 *
 * With K_t = D^2 xi(x_t)(Xi_t) - Gamma(x_t)(alpha(x_t)) and
 * m_t = int_0^t tau_u^t K_u du, the tangent ILP at horizon t is
 *
 *   1/2 { J m_t + D^2 psi(x_t)(Xi_t) - J tau_0^t Gamma(x_0)(Sigma_0)
 *         + Gamma_bar(psi(x_t))(J Xi_t J^T) },   J = D psi(x_t).
 *
 * chi, Xi and m are advanced together with the per-step tau of the flow grid
 * using trapezoidal in-step accumulation.
 */
#pragma once

#include <limits>
#include <vector>

#include "ilpkit/core.hpp"
#include "ilpkit/flow.hpp"
#include "ilpkit/geometry.hpp"

namespace ilpkit {

template <typename Scalar>
struct CovariancePath {
  std::vector<Scalar> times;
  Mat<Scalar> sigma0;
  /// chi_t: flow-transported diffusion covariance, chi_0 = 0.
  std::vector<Mat<Scalar>> chi;
  /// Xi_t = chi_t + tau_0^t Sigma_0 (tau_0^t)^T.
  std::vector<Mat<Scalar>> variance;
};

template <typename Scalar>
struct ILPResult {
  Vec<Scalar> tangent;
  Vec<Scalar> projected;
  Vec<Scalar> base_point;
  /// K_{t_i} = D^2 xi(Xi) - Gamma(alpha) at every grid point.
  std::vector<Vec<Scalar>> integrand_trace;
  /// m_{t_i}, the transported integral of K up to t_i.
  std::vector<Vec<Scalar>> accumulated;
  /// Tangent ILP and psi(x_t) at every grid time (horizon t_i).
  std::vector<Vec<Scalar>> tangent_series;
  std::vector<Vec<Scalar>> base_series;
  std::vector<Vec<Scalar>> projected_series;
};

namespace detail {

/// Symmetrize; clip tiny negative eigenvalues; reject real indefiniteness.
template <typename Scalar>
[[nodiscard]] Mat<Scalar> settle_psd(const Mat<Scalar>& m, const char* what) {
  Mat<Scalar> s = symmetrized(m);
  if (!s.allFinite()) {
    throw NonFiniteState(std::string(what) + ": non-finite covariance");
  }
  const Scalar trace = s.trace();
  if (s.isZero(Scalar(0))) {
    return s;
  }
  const Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(s);
  const Scalar lowest = eig.eigenvalues().minCoeff();
  const Scalar scale = std::max(trace, std::numeric_limits<Scalar>::min());
  if (lowest < Scalar(-1e-10) * scale) {
    throw IndefiniteCovariance(std::string(what) + ": covariance lost positive semi-definiteness");
  }
  if (lowest < Scalar(-64) * std::numeric_limits<Scalar>::epsilon() * scale) {
    const Vec<Scalar> clipped = eig.eigenvalues().cwiseMax(Scalar(0));
    s = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    s = symmetrized(s);
  }
  return s;
}

}  // namespace detail

/// chi_{t_{i+1}} = dt/2 alpha(x_{i+1}) + tau [chi_{t_i} + dt/2 alpha(x_i)] tau^T.
template <typename Scalar>
[[nodiscard]] CovariancePath<Scalar> covariance_path(const ModelSpec<Scalar>& model,
                                                     const FlowGrid<Scalar>& grid,
                                                     const Mat<Scalar>& sigma0) {
  require(grid.has_tau(), "covariance_path: grid has no derivative flow");
  const Eigen::Index p = grid.dim();
  require(sigma0.rows() == p && sigma0.cols() == p, "covariance_path: sigma0 shape");
  const std::size_t n = grid.steps();

  CovariancePath<Scalar> out;
  out.times = grid.times;
  out.sigma0 = detail::settle_psd<Scalar>(sigma0, "covariance_path(sigma0)");
  out.chi.reserve(n + 1);
  out.variance.reserve(n + 1);
  out.chi.push_back(Mat<Scalar>::Zero(p, p));

  Mat<Scalar> alpha_prev = alpha(model, grid.points[0]);
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar half = Scalar(0.5) * (grid.times[i + 1] - grid.times[i]);
    const Mat<Scalar> alpha_next = alpha(model, grid.points[i + 1]);
    const Mat<Scalar>& tau = grid.tau_step[i];
    const Mat<Scalar> next = half * alpha_next + tau * (out.chi[i] + half * alpha_prev) * tau.transpose();
    out.chi.push_back(detail::settle_psd<Scalar>(next, "covariance_path"));
    alpha_prev = alpha_next;
  }
  for (std::size_t i = 0; i <= n; ++i) {
    const Mat<Scalar>& t0 = grid.tau_from_start[i];
    out.variance.push_back(
        detail::settle_psd<Scalar>(out.chi[i] + t0 * out.sigma0 * t0.transpose(), "covariance_path"));
  }
  return out;
}

/// Pi_t = tau_t^0 Xi_t (tau_t^0)^T, Xi pulled back to the initial tangent space.
template <typename Scalar>
[[nodiscard]] std::vector<Mat<Scalar>> pulled_back_variance(const FlowGrid<Scalar>& grid, const CovariancePath<Scalar>& cov) {
  require(grid.tau_from_start.size() == cov.variance.size(), "pulled_back_variance: grids differ");
  std::vector<Mat<Scalar>> out;
  out.reserve(cov.variance.size());
  for (std::size_t i = 0; i < cov.variance.size(); ++i) {
    const auto lu = grid.tau_from_start[i].partialPivLu();
    const Mat<Scalar> left = lu.solve(cov.variance[i]);
    out.push_back(symmetrized(Mat<Scalar>(lu.solve(left.transpose()))));
  }
  return out;
}

namespace detail {

template <typename Scalar>
struct Accumulation {
  std::vector<Vec<Scalar>> integrand;
  std::vector<Vec<Scalar>> accumulated;
  std::vector<Connector<Scalar>> connectors;
};

template <typename Scalar>
[[nodiscard]] Accumulation<Scalar> accumulate_integrand(const ModelSpec<Scalar>& model,
                                                        const VectorFieldSpec<Scalar>& vf,
                                                        const FlowGrid<Scalar>& grid,
                                                        const CovariancePath<Scalar>& cov) {
  require(grid.has_tau(), "ilp: grid has no derivative flow");
  require(cov.variance.size() == grid.points.size(), "ilp: covariance path and grid differ in length");
  const std::size_t n = grid.steps();
  Accumulation<Scalar> acc;
  acc.integrand.reserve(n + 1);
  acc.connectors.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const Vec<Scalar>& x = grid.points[i];
    acc.connectors.push_back(connector(model, x));
    Vec<Scalar> k = vf.d2_xi_apply(x, cov.variance[i]) - connector_apply(acc.connectors.back(), alpha(model, x));
    if (!k.allFinite()) {
      throw NonFiniteState("ilp: non-finite integrand at grid index " + std::to_string(i));
    }
    acc.integrand.push_back(std::move(k));
  }
  acc.accumulated.reserve(n + 1);
  acc.accumulated.push_back(Vec<Scalar>::Zero(grid.dim()));
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar half = Scalar(0.5) * (grid.times[i + 1] - grid.times[i]);
    acc.accumulated.push_back(grid.tau_step[i] * (acc.accumulated[i] + half * acc.integrand[i]) +
                              half * acc.integrand[i + 1]);
  }
  return acc;
}

}  // namespace detail

/// Tangent-space ILP of psi(X_t) at every grid time; the final entry is the
/// horizon value. `projected` fields are left empty (see ilp_project).
template <typename Scalar>
[[nodiscard]] ILPResult<Scalar> ilp_tangent(const ModelSpec<Scalar>& model,
                                            const MapSpec<Scalar>& mapspec,
                                            const VectorFieldSpec<Scalar>& vf,
                                            const FlowGrid<Scalar>& grid,
                                            const CovariancePath<Scalar>& cov) {
  auto acc = detail::accumulate_integrand(model, vf, grid, cov);
  const std::size_t n = grid.steps();
  const Vec<Scalar> initial_correction = connector_apply(acc.connectors.front(), cov.sigma0);

  ILPResult<Scalar> out;
  out.tangent_series.reserve(n + 1);
  out.base_series.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const Vec<Scalar>& x = grid.points[i];
    const Mat<Scalar> jac = mapspec.d_psi(x);
    require(jac.rows() == mapspec.dim_q && jac.cols() == grid.dim(), "ilp_tangent: d_psi shape");
    const Vec<Scalar> y = mapspec.psi(x);
    const Mat<Scalar>& var = cov.variance[i];
    Vec<Scalar> total = jac * acc.accumulated[i];
    total += tensor_contract<Scalar>(mapspec.d2_psi(x), var);
    total -= jac * (grid.tau_from_start[i] * initial_correction);
    total += tensor_contract<Scalar>(mapspec.target_connector(y), Mat<Scalar>(jac * var * jac.transpose()));
    out.tangent_series.push_back(Scalar(0.5) * total);
    out.base_series.push_back(y);
  }
  out.tangent = out.tangent_series.back();
  out.base_point = out.base_series.back();
  out.integrand_trace = std::move(acc.integrand);
  out.accumulated = std::move(acc.accumulated);
  return out;
}

/// psi = identity with the model's own connector on both sides:
/// 1/2 { m_t - tau_0^t Gamma(x_0)(Sigma_0) + Gamma(x_t)(Xi_t) }.
template <typename Scalar>
[[nodiscard]] ILPResult<Scalar> ilp_identity_case(const ModelSpec<Scalar>& model,
                                                  const VectorFieldSpec<Scalar>& vf,
                                                  const FlowGrid<Scalar>& grid,
                                                  const CovariancePath<Scalar>& cov) {
  auto acc = detail::accumulate_integrand(model, vf, grid, cov);
  const std::size_t n = grid.steps();
  const Vec<Scalar> initial_correction = connector_apply(acc.connectors.front(), cov.sigma0);
  ILPResult<Scalar> out;
  for (std::size_t i = 0; i <= n; ++i) {
    Vec<Scalar> total = acc.accumulated[i];
    total -= grid.tau_from_start[i] * initial_correction;
    total += connector_apply(acc.connectors[i], cov.variance[i]);
    out.tangent_series.push_back(Scalar(0.5) * total);
    out.base_series.push_back(grid.points[i]);
  }
  out.tangent = out.tangent_series.back();
  out.base_point = out.base_series.back();
  out.integrand_trace = std::move(acc.integrand);
  out.accumulated = std::move(acc.accumulated);
  return out;
}

/// Post-hoc trapezoid sum_i w_i tau_{t_i}^delta K_i over a stored integrand
/// trace; cross-check for the coupled recursion.
template <typename Scalar>
[[nodiscard]] Vec<Scalar> trapezoid_transport_integral(const FlowGrid<Scalar>& grid, const std::vector<Vec<Scalar>>& integrand) {
  require(integrand.size() == grid.points.size(), "trapezoid_transport_integral: length mismatch");
  const std::size_t n = grid.steps();
  Vec<Scalar> out = Vec<Scalar>::Zero(grid.dim());
  for (std::size_t i = 0; i <= n; ++i) {
    Scalar w = Scalar(0);
    if (i > 0) {
      w += Scalar(0.5) * (grid.times[i] - grid.times[i - 1]);
    }
    if (i < n) {
      w += Scalar(0.5) * (grid.times[i + 1] - grid.times[i]);
    }
    out += w * (grid.tau_to_end[i] * integrand[i]);
  }
  return out;
}

/// exp_{psi(x_t)}(tangent) under the target connector, for the horizon and
/// every grid time. A flat target yields base + tangent exactly.
template <typename Scalar>
void ilp_project(const MapSpec<Scalar>& mapspec, ILPResult<Scalar>& result, int steps = 64) {
  auto field = [&mapspec](const Vec<Scalar>& y) { return mapspec.target_connector(y); };
  result.projected_series.clear();
  result.projected_series.reserve(result.tangent_series.size());
  for (std::size_t i = 0; i < result.tangent_series.size(); ++i) {
    result.projected_series.push_back(exp_map_with<Scalar>(field, result.base_series[i], result.tangent_series[i], steps));
  }
  result.projected = result.projected_series.empty()
                         ? exp_map_with<Scalar>(field, result.base_point, result.tangent, steps)
                         : result.projected_series.back();
}

/// Whole pipeline: flow, derivative flow, covariance path, tangent ILP, projection.
template <typename Scalar>
[[nodiscard]] ILPResult<Scalar> compute_ilp(const ModelSpec<Scalar>& model,
                                            const MapSpec<Scalar>& mapspec,
                                            const VectorFieldSpec<Scalar>& vf,
                                            const Vec<Scalar>& x0,
                                            const Mat<Scalar>& sigma0,
                                            Scalar delta,
                                            int n,
                                            int exp_steps = 64) {
  const FlowGrid<Scalar> grid = solve_flow(vf, x0, delta, n);
  const CovariancePath<Scalar> cov = covariance_path(model, grid, sigma0);
  ILPResult<Scalar> out = ilp_tangent(model, mapspec, vf, grid, cov);
  ilp_project(mapspec, out, exp_steps);
  return out;
}

}  // namespace ilpkit

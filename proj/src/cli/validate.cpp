#include "ilpkit/cli/validate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "ilpkit/ilp.hpp"
#include "ilpkit/matrix_exp.hpp"
#include "ilpkit/mc.hpp"
#include "ilpkit/models.hpp"
#include "ilpkit/tracking.hpp"

namespace ilpkit::cli {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using tracking::TS2State;

constexpr double kSpeed = 200.0;
constexpr double kAccel = 50.0;

ValidationRow upper(std::string name, double measured, double threshold) {
  return {std::move(name), measured, threshold, false, measured <= threshold};
}

ValidationRow lower(std::string name, double measured, double threshold) {
  return {std::move(name), measured, threshold, true, measured >= threshold};
}

/// Rebuilds tau_to_end with the factors multiplied in the wrong order.
void swap_tau_accumulation(FlowGrid<double>& grid) {
  const std::size_t n = grid.steps();
  for (std::size_t k = n; k-- > 0;) {
    grid.tau_to_end[k] = grid.tau_step[k] * grid.tau_to_end[k + 1];
  }
}

/// max over i <= j of |tau_i^delta - tau_j^delta tau_i^j| / max(1, |tau_i^delta|).
double semigroup_residual(const FlowGrid<double>& grid) {
  double worst = 0.0;
  for (std::size_t i = 0; i <= grid.steps(); ++i) {
    for (std::size_t j = i; j <= grid.steps(); ++j) {
      const MatrixXd composed = grid.tau_to_end[j] * grid.transport(i, j);
      const double scale = std::max(1.0, grid.tau_to_end[i].norm());
      worst = std::max(worst, (grid.tau_to_end[i] - composed).norm() / scale);
    }
  }
  return worst;
}

tracking::TrackingParams<double> tracking_params(double gamma) { return {0.5, gamma, kSpeed}; }

Connector<double> closed_connector(const TS2State<double>& s, const ValidationHooks& hooks) {
  Connector<double> c = tracking::connector_coeffs_tracking(s);
  if (hooks.flip_connector_sign) {
    for (auto& m : c.coeffs) m = -m;
  }
  return c;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double lambda_covariance_error(const ModelSpec<double>& model, const VectorFieldSpec<double>& field, const VectorXd& x0,
                               unsigned threads) {
  const FlowGrid<double> grid = solve_flow(field, x0, 1.0, 25);
  const MatrixXd zero = MatrixXd::Zero(x0.size(), x0.size());
  const auto cov = covariance_path(model, grid, zero);
  const auto samples = mc::variation_samples(grid, model, field, zero, 10000, mc::RngPolicy{20240}, 20, threads);
  return (samples.covariance - cov.variance.back()).norm() / cov.variance.back().norm();
}

}  // namespace

std::vector<ValidationRow> run_validate(const ValidationHooks& hooks, unsigned threads) {
  std::vector<ValidationRow> rows;
  const auto linear = models::linear_gaussian(models::default_linear_drift<double>(), models::default_linear_diffusion<double>());
  const VectorXd linear_x0 = VectorXd::Ones(2);

  // Derivative-flow semigroup on a commuting (linear) and a non-commuting
  // (tracking) flow.
  {
    FlowGrid<double> grid = solve_flow(linear.field, linear_x0, 1.0, 50);
    if (hooks.swap_tau_order) swap_tau_accumulation(grid);
    rows.push_back(upper("tau semigroup (linear-gaussian)", semigroup_residual(grid), 1e-8));
  }
  {
    std::mt19937_64 rng(101);
    const auto s = tracking::sample_state<double>(kSpeed, kAccel, rng);
    const auto tm = tracking::tracking_model(tracking_params(52.0));
    FlowGrid<double> grid = solve_flow(tm.field, s.stacked(), 1.0, 25);
    if (hooks.swap_tau_order) swap_tau_accumulation(grid);
    rows.push_back(upper("tau semigroup (ts2-tracking)", semigroup_residual(grid), 1e-8));
  }

  // Tracking geometry: Gamma(alpha) = 0 and the closed form against the
  // generic formula on tangent directions.
  {
    const double gamma = 5.2e3;
    const auto tm = tracking::tracking_model(tracking_params(gamma));
    std::mt19937_64 rng(103);
    double worst_alpha = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto s = tracking::sample_state<double>(kSpeed, kAccel, rng);
      const VectorXd r = connector_apply(closed_connector(s, hooks), alpha(tm.model, s.stacked()));
      worst_alpha = std::max(worst_alpha, r.cwiseAbs().maxCoeff() / (gamma * gamma));
    }
    rows.push_back(upper("Gamma(alpha) = 0 / gamma^2 (ts2-tracking)", worst_alpha, 1e-10));

    ModelSpec<double> generic = tm.model;
    generic.analytic_connector = nullptr;
    std::normal_distribution<double> n01;
    double worst_form = 0.0;
    for (int i = 0; i < 10; ++i) {
      const auto s = tracking::sample_state<double>(kSpeed, kAccel, rng);
      const Eigen::Vector3d vhat = s.v.normalized();
      Eigen::Vector3d zv = tracking::proj_perp<double>(s.v) * Eigen::Vector3d(n01(rng), n01(rng), n01(rng));
      zv.normalize();
      // z_a orthogonal to z_v, with v . z_a = -a . z_v so that (z_v, z_a) is tangent.
      const Eigen::Vector3d za = vhat.cross(zv) * n01(rng) - vhat * (s.a.dot(zv) / s.v.norm());
      VectorXd zeta(6);
      zeta << zv, za;
      MatrixXd normals(6, 2);
      normals << s.v, s.a, Eigen::Vector3d::Zero(), s.v;
      const MatrixXd q = normals.householderQr().householderQ() * MatrixXd::Identity(6, 2);
      const MatrixXd tangent_proj = MatrixXd::Identity(6, 6) - q * q.transpose();
      const VectorXd closed = connector_apply(closed_connector(s, hooks), zeta, zeta);
      const VectorXd general = connector_apply(connector(generic, s.stacked()), zeta, zeta);
      worst_form = std::max(worst_form, (tangent_proj * (closed - general)).norm() / closed.norm());
    }
    rows.push_back(upper("closed-form vs generic connector (ts2-tracking)", worst_form, 1e-6));
  }

  // Covariance identities on the linear model and the Lyapunov ODE residual.
  {
    MatrixXd sigma0(2, 2);
    sigma0 << 0.02, 0.005, 0.005, 0.01;
    const FlowGrid<double> grid = solve_flow(linear.field, linear_x0, 1.0, 50);
    const auto cov = covariance_path(linear.model, grid, sigma0);
    const auto pi = pulled_back_variance(grid, cov);
    double worst = 0.0;
    for (std::size_t i = 0; i <= grid.steps(); ++i) {
      const MatrixXd& t = grid.tau_from_start[i];
      worst = std::max(worst, (t * pi[i] * t.transpose() - cov.variance[i]).cwiseAbs().maxCoeff());
    }
    rows.push_back(upper("Pi conjugation (linear-gaussian)", worst, 1e-9));

    const auto polar = models::polar_demo<double>(0.5, 0.3);
    VectorXd start(2);
    start << 1.0, 0.3;
    std::vector<double> hs, rs;
    for (int n : {20, 40, 80, 160}) {
      const FlowGrid<double> g = solve_flow(polar.field, start, 1.0, n);
      const auto c = covariance_path(polar.model, g, sigma0);
      const std::size_t i = g.steps() / 2;
      const MatrixXd a = polar.field.d_xi(g.points[i]);
      const MatrixXd rhs = alpha(polar.model, g.points[i]) + a * c.variance[i] + c.variance[i] * a.transpose();
      hs.push_back(g.dt());
      rs.push_back(((c.variance[i + 1] - c.variance[i]) / g.dt() - rhs).norm());
    }
    rows.push_back(lower("Xi ODE residual log-log slope (polar-demo)", loglog_slope(hs, rs), 0.8));
  }

  // Variation process covariance against Xi.
  {
    const auto ou = models::scalar_ou(0.7, 0.4);
    rows.push_back(upper("Cov(Lambda) vs Xi (scalar-ou)",
                         lambda_covariance_error(ou.model, ou.field, VectorXd::Constant(1, 1.5), threads), 0.05));
    std::mt19937_64 rng(107);
    const auto s = tracking::sample_state<double>(kSpeed, kAccel, rng);
    const auto tm = tracking::tracking_model(tracking_params(52.0));
    rows.push_back(upper("Cov(Lambda) vs Xi (ts2-tracking)", lambda_covariance_error(tm.model, tm.field, s.stacked(), threads),
                         0.05));
  }

  // Specialized tracking recursion against the generic pipeline.
  {
    std::mt19937_64 rng(109);
    double worst = 0.0;
    for (double gamma : {52.0, 5.2e3}) {
      const auto p = tracking_params(gamma);
      const auto tm = tracking::tracking_model(p);
      for (int i = 0; i < 5; ++i) {
        const auto s = tracking::sample_state<double>(kSpeed, kAccel, rng);
        const auto special = tracking::ilp_tracking(s, p, 1.0, 25);
        const auto generic = compute_ilp(tm.model, tm.inclusion, tm.field, s.stacked(), MatrixXd(MatrixXd::Zero(6, 6)), 1.0, 25);
        worst = std::max(worst, (special.tangent - generic.tangent).norm() / generic.tangent.norm());
      }
    }
    rows.push_back(upper("specialized vs generic ILP (ts2-tracking)", worst, 1e-8));
  }

  // Levi-Civita reduction and linear-Gaussian exactness.
  {
    const auto polar = models::polar_demo<double>(0.5, 1.0);
    double worst = 0.0;
    for (double r : {0.5, 1.0, 2.0, 3.5}) {
      VectorXd x(2);
      x << r, 0.7;
      const auto c = connector(polar.model, x);
      std::vector<MatrixXd> expected(2, MatrixXd::Zero(2, 2));
      expected[0](1, 1) = -r;
      expected[1](0, 1) = expected[1](1, 0) = 1.0 / r;
      for (std::size_t k = 0; k < 2; ++k) worst = std::max(worst, (c.coeffs[k] - expected[k]).cwiseAbs().maxCoeff());
    }
    rows.push_back(upper("Levi-Civita Christoffel symbols (polar)", worst, 1e-8));

    const auto ilp = compute_ilp(linear.model, linear.map, linear.field, linear_x0, MatrixXd(MatrixXd::Zero(2, 2)), 1.0, 1000);
    rows.push_back(upper("ILP tangent (linear-gaussian)", ilp.tangent.cwiseAbs().maxCoeff(), 1e-12));
    const VectorXd exact = matrix_exp(MatrixXd(models::default_linear_drift<double>())) * linear_x0;
    rows.push_back(upper("ILP vs exp(A delta) x0 (linear-gaussian)", (ilp.projected - exact).cwiseAbs().maxCoeff(), 1e-8));
  }
  return rows;
}

bool all_passed(const std::vector<ValidationRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const ValidationRow& r) { return r.passed; });
}

std::string format_validation(const std::vector<ValidationRow>& rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::string out;
  char line[512];
  std::snprintf(line, sizeof(line), "%-6s %-*s %14s %12s\n", "result", static_cast<int>(width), "check", "measured",
                "threshold");
  out += line;
  for (const auto& r : rows) {
    char threshold[32];
    std::snprintf(threshold, sizeof(threshold), "%.3g", r.threshold);
    const std::string bound = std::string(r.lower_bound ? ">= " : "<= ") + threshold;
    std::snprintf(line, sizeof(line), "%-6s %-*s %14.6e %12s\n", r.passed ? "PASS" : "FAIL", static_cast<int>(width),
                  r.name.c_str(), r.measured, bound.c_str());
    out += line;
  }
  return out;
}

}  // namespace ilpkit::cli

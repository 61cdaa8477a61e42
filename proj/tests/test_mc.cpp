#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ilpkit/ilp.hpp"
#include "ilpkit/mc.hpp"
#include "ilpkit/models.hpp"
#include "ilpkit/tracking.hpp"
#include "oracles.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace mc = ilpkit::mc;

VectorXd scalar(double x) { return VectorXd::Constant(1, x); }

double relative_frobenius(const MatrixXd& a, const MatrixXd& b) { return (a - b).norm() / b.norm(); }

// dX = eps X dW in the chart x > 0 with g = 1/x^2: Gamma = -1/x and the
// intrinsic field is xi = -x/2. In the flat coordinate y = ln x this is a
// Brownian motion with drift -1/2.
ilpkit::ModelSpec<double> log_chart_model() {
  ilpkit::ModelSpec<double> m;
  m.dim = 1;
  m.drift = [](const VectorXd& x) { return VectorXd(VectorXd::Zero(x.size())); };
  m.diffusion = [](const VectorXd& x) { return MatrixXd(MatrixXd::Constant(1, 1, x(0))); };
  m.metric = [](const VectorXd& x) { return MatrixXd(MatrixXd::Constant(1, 1, 1.0 / (x(0) * x(0)))); };
  m.analytic_connector = [](const VectorXd& x) {
    ilpkit::Connector<double> c{ilpkit::zero_tensor<double>(1, 1, 1), x};
    c.coeffs[0](0, 0) = -1.0 / x(0);
    return c;
  };
  return m;
}

ilpkit::VectorFieldSpec<double> log_chart_field() {
  ilpkit::VectorFieldSpec<double> vf;
  vf.provenance = ilpkit::Provenance::Analytic;
  vf.xi = [](const VectorXd& x) { return VectorXd(-0.5 * x); };
  vf.d_xi = [](const VectorXd&) { return MatrixXd(MatrixXd::Constant(1, 1, -0.5)); };
  vf.d2_xi_apply = [](const VectorXd&, const MatrixXd&) { return VectorXd(VectorXd::Zero(1)); };
  return vf;
}

TEST(RngPolicy, StreamsAreReproducibleAndDistinct) {
  const mc::RngPolicy p{12345};
  auto a = p.stream_for(7), b = p.stream_for(7), c = p.stream_for(8);
  const mc::RngPolicy q{12346};
  auto d = q.stream_for(7);
  for (int i = 0; i < 100; ++i) {
    const auto va = a(), vb = b(), vc = c(), vd = d();
    EXPECT_EQ(va, vb);
    EXPECT_NE(va, vc);
    EXPECT_NE(va, vd);
  }
}

TEST(EulerMaruyama, ZeroNoiseIsDeterministicEuler) {
  const auto b = ilpkit::models::scalar_ou(0.7, 0.0);
  mc::Engine rng = mc::RngPolicy{1}.stream_for(0);
  const auto path = mc::euler_maruyama(b.model, scalar(2.0), 1.0, 10, rng);
  double x = 2.0;
  for (int i = 1; i <= 10; ++i) {
    x += -0.7 * x * 0.1;
    EXPECT_DOUBLE_EQ(path[static_cast<std::size_t>(i)](0), x);
  }
}

TEST(EulerMaruyama, ScalarOuMeanWithinThreeStandardErrors) {
  const double kappa = 0.6, s = 0.4, x0 = 1.5;
  const auto b = ilpkit::models::scalar_ou(kappa, s);
  const auto summary = mc::mc_mean(b.model, scalar(x0), 1.0, 200, 10000, mc::RngPolicy{2024});
  EXPECT_EQ(summary.count, 10000u);
  ASSERT_EQ(summary.mean.size(), 201u);
  // Euler mean x0 (1 - kappa h)^n is within 1e-3 of the closed form at n = 200.
  for (std::size_t i = 0; i < summary.mean.size(); i += 20) {
    const double expected = oracle::ou_mean(x0, kappa, summary.times[i]);
    EXPECT_LE(std::abs(summary.mean[i](0) - expected), 3.0 * summary.std_error[i](0) + 1e-3) << "t=" << summary.times[i];
  }
  EXPECT_NEAR(summary.std_error.back()(0), std::sqrt(oracle::ou_variance(s, kappa, 1.0) / 10000.0), 2e-4);
}

TEST(EulerMaruyama, WeakOrderOneOnScalarOu) {
  const double kappa = 2.0, s = 0.1, x0 = 1.0;
  const auto b = ilpkit::models::scalar_ou(kappa, s);
  std::vector<double> hs, errs;
  for (int n : {4, 8, 16, 32}) {
    const auto summary = mc::mc_mean(b.model, scalar(x0), 1.0, n, 10000, mc::RngPolicy{77});
    hs.push_back(1.0 / n);
    errs.push_back(std::abs(summary.mean.back()(0) - oracle::ou_mean(x0, kappa, 1.0)));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const double lx = std::log(hs[i]), ly = std::log(errs[i]);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
  }
  const double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
  EXPECT_NEAR(slope, 1.0, 0.3);
}

TEST(EulerMaruyama, TrackingProjectorHoldsConstraintsEveryStep) {
  using namespace ilpkit::tracking;
  const auto tm = tracking_model<double>({0.5, 52.0, 200.0});
  std::mt19937_64 seed_rng(5);
  const auto s = sample_state<double>(200.0, 50.0, seed_rng);
  mc::Engine rng = mc::RngPolicy{9}.stream_for(3);
  const auto path = mc::euler_maruyama(tm.model, s.stacked(), 1.0, 200, rng, tm.projector);
  for (const auto& x : path) {
    const auto st = TS2State<double>::from(x);
    EXPECT_NEAR(st.v.norm(), 200.0, 1e-9 * 200.0);
    EXPECT_LE(std::abs(st.v.dot(st.a)), 1e-9 * st.v.norm() * st.a.norm());
  }
}

TEST(EulerMaruyama, RejectsBadArguments) {
  const auto b = ilpkit::models::scalar_ou(0.7, 0.1);
  mc::Engine rng;
  EXPECT_THROW((void)mc::euler_maruyama(b.model, scalar(1.0), 1.0, 0, rng), ilpkit::DimensionMismatch);
  EXPECT_THROW((void)mc::mc_mean(b.model, scalar(1.0), 1.0, 4, 1, mc::RngPolicy{}), ilpkit::DimensionMismatch);
}

TEST(EulerMaruyama, NonFiniteStateIsReported) {
  const auto b = ilpkit::models::quadratic_decay<double>();
  mc::Engine rng;
  EXPECT_THROW((void)mc::euler_maruyama(b.model, scalar(-50.0), 10.0, 40, rng), ilpkit::NonFiniteState);
}

TEST(McMean, ZeroNoiseHasZeroStandardError) {
  const auto b = ilpkit::models::scalar_ou(0.7, 0.0);
  const auto summary = mc::mc_mean(b.model, scalar(1.0), 1.0, 10, 5, mc::RngPolicy{3});
  mc::Engine rng;
  const auto path = mc::euler_maruyama(b.model, scalar(1.0), 1.0, 10, rng);
  for (std::size_t i = 0; i < path.size(); ++i) {
    EXPECT_DOUBLE_EQ(summary.mean[i](0), path[i](0));
    EXPECT_EQ(summary.std_error[i](0), 0.0);
  }
}

TEST(McMean, BitIdenticalAcrossThreadCounts) {
  const auto b = ilpkit::models::linear_gaussian(ilpkit::models::default_linear_drift<double>(), ilpkit::models::default_linear_diffusion<double>());
  const VectorXd x0 = VectorXd::Ones(2);
  const auto one = mc::mc_mean(b.model, x0, 1.0, 25, 1000, mc::RngPolicy{99}, {}, 1, 1);
  for (unsigned threads : {2u, 3u, 8u}) {
    const auto many = mc::mc_mean(b.model, x0, 1.0, 25, 1000, mc::RngPolicy{99}, {}, 1, threads);
    for (std::size_t i = 0; i < one.mean.size(); ++i) {
      ASSERT_TRUE(one.mean[i] == many.mean[i]);
      ASSERT_TRUE(one.std_error[i] == many.std_error[i]);
    }
  }
}

TEST(McMean, WorkerExceptionPropagates) {
  std::function<mc::Path<double>(std::size_t, mc::Engine&)> sim = [](std::size_t i, mc::Engine&) -> mc::Path<double> {
    if (i == 300) throw ilpkit::NonFiniteState("boom");
    return {VectorXd::Zero(1), VectorXd::Zero(1)};
  };
  EXPECT_THROW((void)mc::mc_summary<double>(sim, 1.0, 1, 500, mc::RngPolicy{}, 4), ilpkit::NonFiniteState);
}

TEST(McMean, RandomInitialStateWidensSpread) {
  const auto b = ilpkit::models::scalar_ou(0.5, 0.0);
  const auto summary = mc::mc_mean(b.model, scalar(1.0), 1.0, 4, 20000, mc::RngPolicy{4}, {}, 1, 1,
                                   std::optional<MatrixXd>(MatrixXd::Constant(1, 1, 0.04)));
  // Var(X_0) = 0.04, so the standard error at t = 0 is 0.2 / sqrt(20000).
  EXPECT_NEAR(summary.std_error.front()(0), 0.2 / std::sqrt(20000.0), 5e-5);
  EXPECT_NEAR(summary.mean.front()(0), 1.0, 4.0 * summary.std_error.front()(0));
}

TEST(IntrinsicFamily, ZeroEpsilonIsDeterministicFlow) {
  const auto m = log_chart_model();
  const auto vf = log_chart_field();
  mc::Engine rng = mc::RngPolicy{5}.stream_for(0);
  const auto path = mc::intrinsic_family_path(m, vf, 0.0, scalar(2.0), 1.0, 1000, rng);
  const auto grid = ilpkit::integrate_flow(vf, scalar(2.0), 1.0, 1000);
  // Euler global error for x' = -x/2 is about x0 e^{-1/2} delta h / 8.
  EXPECT_NEAR(path.back()(0), grid.points.back()(0), 2.0 * 1.0 / 1000.0 / 4.0);
  EXPECT_NEAR(grid.points.back()(0), 2.0 * std::exp(-0.5), 1e-12);
}

TEST(IntrinsicFamily, TrackingFamilyIsDriftPlusScaledNoise) {
  using namespace ilpkit::tracking;
  const auto tm = tracking_model<double>({0.5, 52.0, 200.0});
  std::mt19937_64 seed_rng(7);
  const VectorXd x0 = sample_state<double>(200.0, 50.0, seed_rng).stacked();
  const double eps = 0.3;
  mc::Engine r1 = mc::RngPolicy{6}.stream_for(1), r2 = mc::RngPolicy{6}.stream_for(1);
  const auto fam = mc::intrinsic_family_path(tm.model, tm.field, eps, x0, 1.0, 50, r1, mc::Projector<double>(tm.projector));
  const auto direct = mc::euler_path<double>(
      tm.field.xi, [&](const VectorXd& x) { return MatrixXd(eps * tm.model.diffusion(x)); }, x0, 1.0, 50, r2,
      mc::Projector<double>(tm.projector));
  for (std::size_t i = 0; i < fam.size(); ++i) {
    EXPECT_LE((fam[i] - direct[i]).norm(), 1e-9 * direct[i].norm());
  }
}

TEST(IntrinsicFamily, MeanSlopeInEpsilonSquaredMatchesIlp) {
  // Coordinate mean E[X_delta] = x0 exp((eps^2 - 1) delta / 2); its eps^2-slope
  // is x0 exp(-delta/2) delta/2, which is the ILP of X_delta as an R^1 point.
  const auto m = log_chart_model();
  const auto vf = log_chart_field();
  const double x0 = 1.0, delta = 0.5, eps = 0.3;
  const auto ilp = ilpkit::compute_ilp(m, ilpkit::euclidean_inclusion<double>(1), vf, scalar(x0),
                                       MatrixXd(MatrixXd::Zero(1, 1)), delta, 400);
  const double exact_slope = x0 * std::exp(-0.5 * delta) * 0.5 * delta;
  EXPECT_NEAR(ilp.tangent(0), exact_slope, 1e-6);
  // The intrinsic location is unchanged by noise in this chart.
  EXPECT_NEAR(ilpkit::ilp_identity_case(m, vf, ilpkit::solve_flow(vf, scalar(x0), delta, 400),
                                        ilpkit::covariance_path(m, ilpkit::solve_flow(vf, scalar(x0), delta, 400),
                                                                MatrixXd(MatrixXd::Zero(1, 1))))
                  .tangent(0),
              0.0, 1e-6);

  const int n = 100;
  std::function<mc::Path<double>(std::size_t, mc::Engine&)> sim = [&](std::size_t, mc::Engine& rng) {
    return mc::intrinsic_family_path(m, vf, eps, scalar(x0), delta, n, rng);
  };
  const auto summary = mc::mc_summary<double>(sim, delta, n, 40000, mc::RngPolicy{8});
  mc::Engine unused;
  const double base = mc::intrinsic_family_path(m, vf, 0.0, scalar(x0), delta, n, unused).back()(0);
  const double slope = (summary.mean.back()(0) - base) / (eps * eps);
  const double slope_se = summary.std_error.back()(0) / (eps * eps);
  // Known O(eps^2) curvature of the exact slope: x0 e^{-delta/2} (eps^2 delta^2 / 8 + ...).
  const double curvature = x0 * std::exp(-0.5 * delta) * (std::exp(0.5 * eps * eps * delta) - 1.0) / (eps * eps) - exact_slope;
  EXPECT_LE(std::abs(slope - curvature - ilp.tangent(0)), 3.0 * slope_se + 5e-3);
}

TEST(VariationSamples, ZeroNoiseIsZero) {
  const auto b = ilpkit::models::scalar_ou(0.5, 0.0);
  const auto grid = ilpkit::solve_flow(b.field, scalar(1.0), 1.0, 10);
  const auto v = mc::variation_samples(grid, b.model, b.field, MatrixXd(MatrixXd::Zero(1, 1)), 100, mc::RngPolicy{1});
  EXPECT_EQ(v.covariance(0, 0), 0.0);
  EXPECT_EQ(v.mean(0), 0.0);
}

TEST(VariationSamples, BrownianCovarianceIsDeltaAlpha) {
  const MatrixXd sigma = ilpkit::models::default_linear_diffusion<double>();
  const auto b = ilpkit::models::linear_gaussian<double>(MatrixXd(MatrixXd::Zero(2, 2)), sigma);
  const auto grid = ilpkit::solve_flow(b.field, VectorXd(VectorXd::Zero(2)), 2.0, 10);
  const auto v = mc::variation_samples(grid, b.model, b.field, MatrixXd(MatrixXd::Zero(2, 2)), 10000, mc::RngPolicy{2});
  EXPECT_LE(relative_frobenius(v.covariance, 2.0 * sigma * sigma.transpose()), 0.05);
}

TEST(VariationSamples, LinearModelMatchesCovariancePath) {
  const auto b = ilpkit::models::linear_gaussian(ilpkit::models::default_linear_drift<double>(), ilpkit::models::default_linear_diffusion<double>());
  MatrixXd s0(2, 2);
  s0 << 0.02, 0.005, 0.005, 0.01;
  const auto grid = ilpkit::solve_flow(b.field, VectorXd(VectorXd::Ones(2)), 1.0, 25);
  const MatrixXd xi = ilpkit::covariance_path(b.model, grid, s0).variance.back();
  const auto v4 = mc::variation_samples(grid, b.model, b.field, s0, 10000, mc::RngPolicy{3});
  EXPECT_LE(relative_frobenius(v4.covariance, xi), 0.05);
  const auto v5 = mc::variation_samples(grid, b.model, b.field, s0, 100000, mc::RngPolicy{4});
  EXPECT_LE(relative_frobenius(v5.covariance, xi), 0.02);
}

TEST(VariationSamples, BitIdenticalAcrossThreadCounts) {
  const auto b = ilpkit::models::scalar_ou(0.5, 0.3);
  const auto grid = ilpkit::solve_flow(b.field, scalar(1.0), 1.0, 10);
  const auto a = mc::variation_samples(grid, b.model, b.field, MatrixXd(MatrixXd::Zero(1, 1)), 1000, mc::RngPolicy{5}, 5, 1);
  const auto c = mc::variation_samples(grid, b.model, b.field, MatrixXd(MatrixXd::Zero(1, 1)), 1000, mc::RngPolicy{5}, 5, 4);
  EXPECT_TRUE(a.covariance == c.covariance);
  EXPECT_TRUE(a.mean == c.mean);
}

}  // namespace

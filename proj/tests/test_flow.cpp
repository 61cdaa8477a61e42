#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ilpkit/flow.hpp"
#include "ilpkit/matrix_exp.hpp"
#include "ilpkit/models.hpp"
#include "ilpkit/tracking.hpp"
#include "oracles.hpp"
#include "test_models.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd test_matrix() {
  MatrixXd a(3, 3);
  a << -0.3, 0.5, 0.1,
       -0.4, -0.2, 0.3,
       0.2, -0.1, -0.5;
  return a;
}

ilpkit::VectorFieldSpec<double> linear_field(const MatrixXd& a) {
  ilpkit::VectorFieldSpec<double> vf;
  vf.provenance = ilpkit::Provenance::Analytic;
  vf.xi = [a](const VectorXd& x) { return VectorXd(a * x); };
  vf.d_xi = [a](const VectorXd&) { return a; };
  vf.d2_xi_apply = [](const VectorXd& x, const MatrixXd&) { return VectorXd(VectorXd::Zero(x.size())); };
  return vf;
}

// Three-dimensional field whose Jacobians along the flow do not commute:
// u' = 1, y' = R(u) y with a rotation rate and damping that change with u.
VectorXd twisting_xi(const VectorXd& x) {
  const double u = x(0);
  VectorXd out(3);
  out << 1.0, -0.2 * x(1) + (1.0 + u) * x(2), -(1.0 + u) * x(1) - 0.1 * u * x(2);
  return out;
}

MatrixXd twisting_dxi(const VectorXd& x) {
  const double u = x(0);
  MatrixXd j(3, 3);
  j << 0, 0, 0,
       x(2), -0.2, 1.0 + u,
       -x(1) - 0.1 * x(2), -(1.0 + u), -0.1 * u;
  return j;
}

ilpkit::VectorFieldSpec<double> twisting_field() {
  ilpkit::VectorFieldSpec<double> vf;
  vf.provenance = ilpkit::Provenance::Analytic;
  vf.xi = twisting_xi;
  vf.d_xi = twisting_dxi;
  vf.d2_xi_apply = [](const VectorXd&, const MatrixXd& t) {
    const MatrixXd s = 0.5 * (t + t.transpose());
    VectorXd out(3);
    out << 0.0, 2.0 * s(0, 2), -2.0 * s(0, 1) - 0.2 * s(0, 2);
    return out;
  };
  return vf;
}

// Joint fine-step RK4 of x' = xi(x), tau' = D xi(x) tau.
MatrixXd joint_tau_oracle(const VectorXd& x0, double delta, int steps) {
  const double h = delta / steps;
  VectorXd x = x0;
  MatrixXd tau = MatrixXd::Identity(3, 3);
  for (int i = 0; i < steps; ++i) {
    const VectorXd k1x = twisting_xi(x);
    const MatrixXd k1t = twisting_dxi(x) * tau;
    const VectorXd x2 = x + 0.5 * h * k1x;
    const VectorXd k2x = twisting_xi(x2);
    const MatrixXd k2t = twisting_dxi(x2) * (tau + 0.5 * h * k1t);
    const VectorXd x3 = x + 0.5 * h * k2x;
    const VectorXd k3x = twisting_xi(x3);
    const MatrixXd k3t = twisting_dxi(x3) * (tau + 0.5 * h * k2t);
    const VectorXd x4 = x + h * k3x;
    const VectorXd k4x = twisting_xi(x4);
    const MatrixXd k4t = twisting_dxi(x4) * (tau + h * k3t);
    x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    tau += h / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t);
  }
  return tau;
}

TEST(XiFromModel, FlatModelReturnsDrift) {
  MatrixXd sigma(2, 2);
  sigma << 1, 0, 0.5, 1;
  auto m = testmodels::flat_model(sigma, (sigma * sigma.transpose()).inverse());
  m.drift = [](const VectorXd& x) { return VectorXd((VectorXd(2) << std::sin(x(0)), x(0) * x(1)).finished()); };
  const auto vf = ilpkit::xi_from_model(m);
  VectorXd x(2);
  x << 0.3, -1.2;
  EXPECT_TRUE(vf.xi(x) == m.drift(x));
}

TEST(XiFromModel, TrackingMatchesClosedForm) {
  using namespace ilpkit::tracking;
  const auto tm = tracking_model<double>({0.5, 52.0, 200.0});
  const auto vf = ilpkit::xi_from_model(tm.model);
  std::mt19937_64 rng(31);
  for (int i = 0; i < 5; ++i) {
    const auto s = sample_state<double>(200.0, 50.0, rng);
    const VectorXd expected = xi_tracking(s, tm.params);
    EXPECT_LE((vf.xi(s.stacked()) - expected).cwiseAbs().maxCoeff(), 1e-10 * expected.cwiseAbs().maxCoeff());
  }
}

TEST(XiFromModel, OneDimensionalScaleInvariantNoise) {
  // alpha = x^2 and g = 1/x^2 on x > 0: Gamma = -1/x, so xi = b + 1/2 x^2 (-1/x) = -x/2.
  ilpkit::ModelSpec<double> m;
  m.dim = 1;
  m.drift = [](const VectorXd& x) { return VectorXd(VectorXd::Zero(x.size())); };
  m.diffusion = [](const VectorXd& x) { return MatrixXd(MatrixXd::Constant(1, 1, x(0))); };
  m.metric = [](const VectorXd& x) { return MatrixXd(MatrixXd::Constant(1, 1, 1.0 / (x(0) * x(0)))); };
  const auto vf = ilpkit::xi_from_model(m);
  for (double x : {0.5, 1.0, 3.0}) {
    EXPECT_NEAR(vf.xi(VectorXd::Constant(1, x))(0), -0.5 * x, 1e-8 * x);
    EXPECT_NEAR(vf.d_xi(VectorXd::Constant(1, x))(0, 0), -0.5, 1e-6);
  }
}

TEST(IntegrateFlow, ZeroFieldIsConstant) {
  const auto vf = linear_field(MatrixXd::Zero(3, 3));
  const VectorXd x0 = VectorXd::LinSpaced(3, 1.0, 3.0);
  const auto grid = ilpkit::integrate_flow(vf, x0, 2.0, 10);
  ASSERT_EQ(grid.points.size(), 11u);
  for (const auto& x : grid.points) EXPECT_TRUE(x == x0);
  EXPECT_EQ(grid.times.back(), 2.0);
}

TEST(IntegrateFlow, LinearMatchesMatrixExponential) {
  const MatrixXd a = test_matrix();
  const double delta = 1.0 / a.norm();
  const VectorXd x0 = VectorXd::LinSpaced(3, -1.0, 2.0);
  const auto grid = ilpkit::integrate_flow(linear_field(a), x0, delta, 1000);
  EXPECT_LE((grid.points.back() - oracle::expm(a * delta) * x0).norm(), 1e-8);
  EXPECT_TRUE(grid.points.front() == x0);
}

TEST(IntegrateFlow, FourthOrderConvergence) {
  const MatrixXd a = 3.0 * test_matrix();
  const VectorXd x0 = VectorXd::LinSpaced(3, -1.0, 2.0);
  const VectorXd exact = oracle::expm(a * 2.0) * x0;
  const double e1 = (ilpkit::integrate_flow(linear_field(a), x0, 2.0, 20).points.back() - exact).norm();
  const double e2 = (ilpkit::integrate_flow(linear_field(a), x0, 2.0, 40).points.back() - exact).norm();
  EXPECT_NEAR(e1 / e2, 16.0, 2.0);
}

TEST(IntegrateFlow, BlowupThrows) {
  const auto b = ilpkit::models::quadratic_decay<double>();
  // xi = -x^2 from x0 = -1 reaches -infinity at t = 1.
  EXPECT_THROW((void)ilpkit::integrate_flow(b.field, VectorXd(VectorXd::Constant(1, -1.0)), 3.0, 30), ilpkit::NonFiniteState);
}

TEST(IntegrateFlow, InvalidArguments) {
  const auto vf = linear_field(MatrixXd::Zero(1, 1));
  EXPECT_THROW((void)ilpkit::integrate_flow(vf, VectorXd(VectorXd::Zero(1)), 0.0, 5), ilpkit::DimensionMismatch);
  EXPECT_THROW((void)ilpkit::integrate_flow(vf, VectorXd(VectorXd::Zero(1)), 1.0, 0), ilpkit::DimensionMismatch);
}

TEST(DerivativeFlow, ConstantFieldGivesIdentity) {
  ilpkit::VectorFieldSpec<double> vf = linear_field(MatrixXd::Zero(2, 2));
  vf.xi = [](const VectorXd&) { return VectorXd((VectorXd(2) << 1.0, -2.0).finished()); };
  const auto grid = ilpkit::solve_flow(vf, VectorXd(VectorXd::Zero(2)), 1.0, 8);
  for (const auto& t : grid.tau_step) EXPECT_TRUE(t.isIdentity(0.0));
  for (const auto& t : grid.tau_to_end) EXPECT_TRUE(t.isIdentity(0.0));
}

TEST(DerivativeFlow, LinearMatchesMatrixExponential) {
  const MatrixXd a = test_matrix();
  const auto grid = ilpkit::solve_flow(linear_field(a), VectorXd(VectorXd::Ones(3)), 1.5, 30);
  EXPECT_TRUE(grid.tau_to_end.back().isIdentity(0.0));
  for (std::size_t i = 0; i <= grid.steps(); i += 5) {
    EXPECT_LE((grid.tau_to_end[i] - oracle::expm(a * (1.5 - grid.times[i]))).norm(), 1e-10);
    EXPECT_LE((grid.tau_from_start[i] - oracle::expm(a * grid.times[i])).norm(), 1e-10);
  }
  EXPECT_LE((grid.transport(4, 17) - oracle::expm(a * (grid.times[17] - grid.times[4]))).norm(), 1e-10);
}

TEST(DerivativeFlow, NoncommutingMatchesOdeAtSecondOrder) {
  VectorXd x0(3);
  x0 << 0.0, 1.0, -0.5;
  const MatrixXd ref = joint_tau_oracle(x0, 1.0, 4000);
  const double e1 = (ilpkit::solve_flow(twisting_field(), x0, 1.0, 20).tau_to_end.front() - ref).norm();
  const double e2 = (ilpkit::solve_flow(twisting_field(), x0, 1.0, 40).tau_to_end.front() - ref).norm();
  EXPECT_GT(e1, 0.0);
  EXPECT_NEAR(e1 / e2, 4.0, 0.8);
  EXPECT_LE(e2, 1e-2);
}

TEST(DerivativeFlow, SemigroupOnRandomTriples) {
  const auto grid = ilpkit::solve_flow(linear_field(test_matrix()), VectorXd(VectorXd::Ones(3)), 2.0, 50);
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<std::size_t> pick(0, grid.steps());
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i > j) std::swap(i, j);
    if (j > k) std::swap(j, k);
    if (i > j) std::swap(i, j);
    EXPECT_LE((grid.transport(i, k) - grid.transport(j, k) * grid.transport(i, j)).norm(), 1e-8);
    EXPECT_LE((grid.tau_to_end[i] - grid.tau_to_end[j] * grid.transport(i, j)).norm(), 1e-8);
  }
}

TEST(DerivativeFlow, BackwardOdeConsistency) {
  // d/dt tau_t^delta = -tau_t^delta D xi(x_t); central differences on the grid.
  auto residual = [](int n) {
    const auto vf = twisting_field();
    VectorXd x0(3);
    x0 << 0.0, 1.0, -0.5;
    const auto grid = ilpkit::solve_flow(vf, x0, 1.0, n);
    const std::size_t mid = grid.steps() / 2;
    const double h = grid.dt();
    const MatrixXd deriv = (grid.tau_to_end[mid + 1] - grid.tau_to_end[mid - 1]) / (2 * h);
    return (deriv + grid.tau_to_end[mid] * vf.d_xi(grid.points[mid])).norm();
  };
  const double r1 = residual(40), r2 = residual(80);
  EXPECT_LE(r2, 1e-2);
  EXPECT_GT(r1 / r2, 3.0);
}

TEST(DerivativeFlow, TransportRejectsReversedIndices) {
  const auto grid = ilpkit::solve_flow(linear_field(test_matrix()), VectorXd(VectorXd::Ones(3)), 1.0, 4);
  EXPECT_THROW((void)grid.transport(3, 1), ilpkit::DimensionMismatch);
}

TEST(FdVectorField, LinearHasNoSecondDerivative) {
  const MatrixXd a = test_matrix();
  const auto vf = ilpkit::fd_vectorfield<double>([a](const VectorXd& x) { return VectorXd(a * x); }, 1e-5);
  VectorXd x(3);
  x << 0.4, -2.0, 1.1;
  MatrixXd t(3, 3);
  t << 1, 0.2, 0, 0.2, 2, -0.3, 0, -0.3, 0.5;
  EXPECT_LE(vf.d2_xi_apply(x, t).norm(), 1e-6);
  EXPECT_LE((vf.d_xi(x) - a).norm(), 1e-9);
}

TEST(FdVectorField, SquareOfFirstCoordinate) {
  const auto vf = ilpkit::fd_vectorfield<double>(
      [](const VectorXd& x) { return VectorXd((VectorXd(2) << x(0) * x(0), 0.0).finished()); }, 1e-5);
  MatrixXd t(2, 2);
  t << 0.7, 0.3, 0.3, -1.1;
  VectorXd x(2);
  x << 1.5, -0.5;
  const VectorXd d2 = vf.d2_xi_apply(x, t);
  EXPECT_NEAR(d2(0), 1.4, 1e-6);
  EXPECT_NEAR(d2(1), 0.0, 1e-12);
}

TEST(FdVectorField, OnlySymmetricPartMatters) {
  const auto vf = ilpkit::fd_vectorfield<double>(twisting_xi, 1e-5);
  VectorXd x(3);
  x << 0.3, 0.2, -0.7;
  MatrixXd t(3, 3);
  t << 1, 0.5, 0, -0.1, 1, 0.2, 0.4, 0, 1;
  const MatrixXd sym = 0.5 * (t + t.transpose());
  EXPECT_LE((vf.d2_xi_apply(x, t) - twisting_field().d2_xi_apply(x, sym)).norm(), 1e-6);
  EXPECT_LE((vf.d2_xi_apply(x, t) - vf.d2_xi_apply(x, sym)).norm(), 1e-12);
  EXPECT_LE((vf.d2_xi_apply(x, 2.0 * sym) - 2.0 * vf.d2_xi_apply(x, sym)).norm(), 1e-6);
}

TEST(FdVectorField, TrackingSecondDerivativeMatchesClosedFormOnNoiseBlock) {
  // For covariances confined to the acceleration block and orthogonal to v,
  // which is where the noise enters, the closed-form contraction and the
  // ambient second derivative coincide.
  using namespace ilpkit::tracking;
  const TrackingParams<double> p{0.5, 52.0, 200.0};
  std::mt19937_64 rng(43);
  std::normal_distribution<double> n01;
  const auto fd = ilpkit::fd_vectorfield<double>([p](const VectorXd& x) { return VectorXd(xi_tracking(TS2State<double>::from(x), p)); }, 1e-5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = sample_state<double>(200.0, 50.0, rng);
    MatrixXd c(3, 3);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = n01(rng);
    const MatrixXd pv = proj_perp<double>(s.v);
    MatrixXd chi = MatrixXd::Zero(6, 6);
    chi.bottomRightCorner(3, 3) = 400.0 * pv * c * c.transpose() * pv;
    const VectorXd expected = d2xi_apply_tracking(s, chi);
    EXPECT_LE((fd.d2_xi_apply(s.stacked(), chi) - expected).norm(), 1e-4 * expected.norm());
  }
}

TEST(FdVectorField, TrackingAmbientHessianOnGeneralTangentDirections) {
  // For a tangent direction z = (z_v, z_a) (v.z_v = 0, a.z_v + v.z_a = 0) the
  // ambient second derivative of xi_a along z is
  //   -2/N (|z_a|^2 v + 2 (a.z_a) z_v - |a|^2 |z_v|^2 v / N) + 2 lambda (z_v.z_a) v / N,
  // N = |v|^2, which differs from the closed-form contraction once z_v != 0.
  using namespace ilpkit::tracking;
  const TrackingParams<double> p{0.5, 52.0, 200.0};
  std::mt19937_64 rng(47);
  std::normal_distribution<double> n01;
  const auto fd = ilpkit::fd_vectorfield<double>([p](const VectorXd& x) { return VectorXd(xi_tracking(TS2State<double>::from(x), p)); }, 1e-5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = sample_state<double>(200.0, 50.0, rng);
    const double nv = s.v.squaredNorm();
    const Eigen::Vector3d zv = proj_perp<double>(s.v) * Eigen::Vector3d(n01(rng), n01(rng), n01(rng));
    Eigen::Vector3d za(n01(rng), n01(rng), n01(rng));
    za += s.v * ((-s.a.dot(zv) - s.v.dot(za)) / nv);
    VectorXd z(6);
    z << zv, za;
    const MatrixXd chi = z * z.transpose();
    VectorXd expected(6);
    expected << Eigen::Vector3d::Zero(),
        -2.0 / nv * (za.squaredNorm() * s.v + 2.0 * s.a.dot(za) * zv - s.a.squaredNorm() * zv.squaredNorm() * s.v / nv) +
            2.0 * p.lambda_damping * zv.dot(za) * s.v / nv;
    EXPECT_LE((fd.d2_xi_apply(s.stacked(), chi) - expected).norm(), 1e-4 * expected.norm());
    EXPECT_GT((d2xi_apply_tracking(s, chi) - expected).norm(), 1e-3 * expected.norm());
  }
}

}  // namespace

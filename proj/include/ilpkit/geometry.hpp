/**
 * @file geometry.hpp
 * @brief Diffusion-variance cometric, the canonical sub-Riemannian connector
 *        built from a generalized-inverse metric, the cotangent splitting,
 *        geodesic exponential map, and auxiliary tensors of a map.
 *
 * Everything works in one global chart. Rank-3 quantities use the
 * Tensor3 layout t[k](i, j); for a connector that is Gamma^k_ij.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>

#include "ilpkit/core.hpp"

namespace ilpkit {

class InvalidModel : public Error {
 public:
  using Error::Error;
};

template <typename Scalar>
struct Connector {
  Tensor3<Scalar> coeffs;
  Vec<Scalar> point;

  [[nodiscard]] Eigen::Index dim() const { return static_cast<Eigen::Index>(coeffs.size()); }
};

/// A diffusion dX = b(X) dt + sigma(X) dW in one chart, together with a
/// Riemannian metric g that is a generalized inverse of alpha = sigma sigma^T.
template <typename Scalar>
struct ModelSpec {
  using Point = Vec<Scalar>;

  Eigen::Index dim = 0;
  std::function<Vec<Scalar>(const Point&)> drift;
  /// p x m, one column per noise channel.
  std::function<Mat<Scalar>(const Point&)> diffusion;
  std::function<Mat<Scalar>(const Point&)> metric;

  /// Optional: [m](i, j) = d g_ij / d x_m.
  std::function<Tensor3<Scalar>(const Point&)> metric_derivative;
  /// Optional: [m](i, j) = d alpha^ij / d x_m. Used together with metric_derivative.
  std::function<Tensor3<Scalar>(const Point&)> alpha_derivative;
  /// Optional closed-form connector; bypasses the metric formula entirely.
  std::function<Connector<Scalar>(const Point&)> analytic_connector;

  Scalar fd_step = Scalar(1e-5);
};

/// A C^2 map psi: N -> M into a target chart with its own connector.
template <typename Scalar>
struct MapSpec {
  using Point = Vec<Scalar>;

  Eigen::Index dim_q = 0;
  std::function<Vec<Scalar>(const Point&)> psi;
  /// q x p
  std::function<Mat<Scalar>(const Point&)> d_psi;
  /// [beta](i, j) = d^2 psi^beta / dx_i dx_j
  std::function<Tensor3<Scalar>(const Point&)> d2_psi;
  /// Target connector at a q-point, [gamma](beta, beta').
  std::function<Tensor3<Scalar>(const Point&)> target_connector;
};

template <typename Scalar>
struct Splitting {
  Mat<Scalar> kernel_basis;  // p x (p - r)
  Mat<Scalar> f_basis;       // p x r
  Mat<Scalar> alpha_circ;    // p x p, invertible
  Eigen::Index rank = 0;
};

template <typename Scalar>
struct GeneralizedInverseCheck {
  bool ok = false;
  Scalar residual = Scalar(0);
};

namespace detail {

/// Per-coordinate step: fd_step scaled by the coordinate magnitude.
template <typename Scalar>
[[nodiscard]] Scalar fd_step_for(Scalar fd_step, Scalar coord) {
  using std::abs;
  return fd_step * std::max(Scalar(1), abs(coord));
}

/// Fourth-order central differences of a matrix-valued function.
template <typename Scalar, typename F>
[[nodiscard]] Tensor3<Scalar> central_jacobian(F&& f, const Vec<Scalar>& x, Scalar fd_step) {
  const Eigen::Index p = x.size();
  Tensor3<Scalar> out;
  out.reserve(static_cast<std::size_t>(p));
  for (Eigen::Index m = 0; m < p; ++m) {
    const Scalar h = fd_step_for(fd_step, x(m));
    Vec<Scalar> xp1 = x, xm1 = x, xp2 = x, xm2 = x;
    xp1(m) += h;
    xm1(m) -= h;
    xp2(m) += 2 * h;
    xm2(m) -= 2 * h;
    const Mat<Scalar> fp1 = f(xp1), fm1 = f(xm1), fp2 = f(xp2), fm2 = f(xm2);
    out.push_back((Scalar(8) * (fp1 - fm1) - (fp2 - fm2)) / (Scalar(12) * h));
  }
  return out;
}

template <typename Scalar>
[[nodiscard]] Scalar max_abs(const Mat<Scalar>& m) {
  return m.size() == 0 ? Scalar(0) : m.cwiseAbs().maxCoeff();
}

}  // namespace detail

template <typename Scalar>
[[nodiscard]] Mat<Scalar> alpha(const ModelSpec<Scalar>& model, const Vec<Scalar>& x) {
  const Mat<Scalar> sigma = model.diffusion(x);
  require(sigma.rows() == model.dim, "alpha: diffusion has wrong row count");
  Mat<Scalar> a = sigma * sigma.transpose();
  return symmetrized(a);
}

template <typename Scalar>
[[nodiscard]] GeneralizedInverseCheck<Scalar> check_generalized_inverse(const ModelSpec<Scalar>& model,
                                                                        const Vec<Scalar>& x,
                                                                        Scalar tol) {
  const Mat<Scalar> a = alpha(model, x);
  const Mat<Scalar> g = model.metric(x);
  require(g.rows() == model.dim && g.cols() == model.dim, "check_generalized_inverse: metric shape");
  GeneralizedInverseCheck<Scalar> out;
  out.residual = detail::max_abs<Scalar>(a * g * a - a);
  out.ok = out.residual <= tol;
  return out;
}

/// Gamma(T)^k = sum_ij Gamma^k_ij T^ij.
template <typename Scalar, typename Derived>
[[nodiscard]] Vec<Scalar> connector_apply(const Connector<Scalar>& c, const Eigen::MatrixBase<Derived>& t) {
  const Eigen::Index p = c.dim();
  require(t.rows() == p && t.cols() == p, "connector_apply: tensor shape does not match connector");
  Vec<Scalar> out(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    out(k) = c.coeffs[static_cast<std::size_t>(k)].cwiseProduct(t).sum();
  }
  return out;
}

/// Bilinear form Gamma(u (x) v).
template <typename Scalar>
[[nodiscard]] Vec<Scalar> connector_apply(const Connector<Scalar>& c, const Vec<Scalar>& u, const Vec<Scalar>& v) {
  const Eigen::Index p = c.dim();
  require(u.size() == p && v.size() == p, "connector_apply: vector size does not match connector");
  Vec<Scalar> out(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    out(k) = u.dot(c.coeffs[static_cast<std::size_t>(k)] * v);
  }
  return out;
}

/// Same contraction for a bare coefficient stack (target connectors).
template <typename Scalar, typename Derived>
[[nodiscard]] Vec<Scalar> tensor_contract(const Tensor3<Scalar>& coeffs, const Eigen::MatrixBase<Derived>& t) {
  Vec<Scalar> out(static_cast<Eigen::Index>(coeffs.size()));
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    require(coeffs[k].rows() == t.rows() && coeffs[k].cols() == t.cols(), "tensor_contract: shape mismatch");
    out(static_cast<Eigen::Index>(k)) = coeffs[k].cwiseProduct(t).sum();
  }
  return out;
}

/// Christoffel symbols of the canonical sub-Riemannian connection:
///   sum_s Gamma^s_ij g_sk = 1/2 { d_i B_jk + d_j B_ik - d_k B_ij },  B = g alpha g.
/// Derivatives come from the model's analytic callables when both are set,
/// otherwise from fourth-order central differences of B.
template <typename Scalar>
[[nodiscard]] Connector<Scalar> connector(const ModelSpec<Scalar>& model, const Vec<Scalar>& x) {
  const Eigen::Index p = model.dim;
  require(x.size() == p, "connector: point has wrong dimension");
  if (model.analytic_connector) {
    return model.analytic_connector(x);
  }

  const Mat<Scalar> g = model.metric(x);
  require(g.rows() == p && g.cols() == p, "connector: metric shape");
  const Scalar g_scale = std::max(Scalar(1), detail::max_abs<Scalar>(g));
  if (detail::max_abs<Scalar>(g - g.transpose()) > Scalar(1e-12) * g_scale) {
    throw InvalidModel("connector: metric is not symmetric");
  }
  const Eigen::LLT<Mat<Scalar>> llt(symmetrized(g));
  if (llt.info() != Eigen::Success || llt.rcond() < Scalar(64) * std::numeric_limits<Scalar>::epsilon()) {
    throw SingularMetric("connector: metric is not positive definite to working precision");
  }

  Tensor3<Scalar> d_b;
  if (model.metric_derivative && model.alpha_derivative) {
    const Mat<Scalar> a = alpha(model, x);
    const Tensor3<Scalar> dg = model.metric_derivative(x);
    const Tensor3<Scalar> da = model.alpha_derivative(x);
    require(static_cast<Eigen::Index>(dg.size()) == p && static_cast<Eigen::Index>(da.size()) == p,
            "connector: analytic derivative has wrong rank");
    d_b.reserve(static_cast<std::size_t>(p));
    for (std::size_t m = 0; m < static_cast<std::size_t>(p); ++m) {
      d_b.push_back(dg[m] * a * g + g * da[m] * g + g * a * dg[m]);
    }
  } else {
    auto b_of = [&model](const Vec<Scalar>& y) -> Mat<Scalar> {
      const Mat<Scalar> gy = model.metric(y);
      return gy * alpha(model, y) * gy;
    };
    d_b = detail::central_jacobian<Scalar>(b_of, x, model.fd_step);
  }
  for (auto& m : d_b) {
    m = symmetrized(m);
  }

  Connector<Scalar> out;
  out.point = x;
  out.coeffs = zero_tensor<Scalar>(p, p, p);
  Vec<Scalar> rhs(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i; j < p; ++j) {
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      for (Eigen::Index k = 0; k < p; ++k) {
        rhs(k) = Scalar(0.5) * (d_b[ui](j, k) + d_b[uj](i, k) - d_b[static_cast<std::size_t>(k)](i, j));
      }
      const Vec<Scalar> gamma_ij = llt.solve(rhs);
      for (Eigen::Index s = 0; s < p; ++s) {
        out.coeffs[static_cast<std::size_t>(s)](i, j) = gamma_ij(s);
        out.coeffs[static_cast<std::size_t>(s)](j, i) = gamma_ij(s);
      }
    }
  }
  return out;
}

/// Splits the cotangent space into Ker(alpha) and its complement F, orthogonal
/// under the cometric dual to `ambient_metric`, and assembles the isomorphism
/// alpha_circ = beta on the kernel, alpha on F.
template <typename Scalar>
[[nodiscard]] Splitting<Scalar> sub_riemannian_splitting(const Mat<Scalar>& alpha_matrix,
                                                         const Mat<Scalar>& ambient_metric,
                                                         std::optional<Eigen::Index> explicit_rank = std::nullopt) {
  const Eigen::Index p = alpha_matrix.rows();
  require(alpha_matrix.cols() == p && ambient_metric.rows() == p && ambient_metric.cols() == p,
          "sub_riemannian_splitting: shape mismatch");
  const Eigen::LLT<Mat<Scalar>> ambient_llt(symmetrized(ambient_metric));
  if (ambient_llt.info() != Eigen::Success) {
    throw SingularMetric("sub_riemannian_splitting: ambient metric is not positive definite");
  }

  const Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(symmetrized(alpha_matrix));
  // Order eigenpairs by decreasing magnitude.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Vec<Scalar> mags = eig.eigenvalues().cwiseAbs();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return mags(a) > mags(b); });

  Eigen::Index rank = 0;
  if (explicit_rank) {
    rank = *explicit_rank;
    require(rank >= 0 && rank <= p, "sub_riemannian_splitting: explicit rank out of range");
  } else if (p > 0 && mags(order[0]) > Scalar(0)) {
    const Scalar top = mags(order[0]);
    const Scalar cut = top * Scalar(1e-9);
    while (rank < p && mags(order[static_cast<std::size_t>(rank)]) > cut) {
      ++rank;
    }
    if (rank < p) {
      const Scalar last_kept = mags(order[static_cast<std::size_t>(rank - 1)]);
      const Scalar first_dropped = mags(order[static_cast<std::size_t>(rank)]);
      if (first_dropped > Scalar(0) && last_kept / first_dropped < Scalar(1e3)) {
        throw RankDeficiencyAmbiguous("sub_riemannian_splitting: no clear singular-value gap; pass an explicit rank");
      }
    }
  }

  Mat<Scalar> range(p, rank), kernel(p, p - rank);
  for (Eigen::Index c = 0; c < p; ++c) {
    const auto col = eig.eigenvectors().col(order[static_cast<std::size_t>(c)]);
    if (c < rank) {
      range.col(c) = col;
    } else {
      kernel.col(c - rank) = col;
    }
  }

  Splitting<Scalar> out;
  out.rank = rank;
  out.kernel_basis = kernel;
  // F is the image of range(alpha) under the ambient metric: theta = G u
  // gives <theta, lambda>° = u . lambda = 0 for lambda in Ker(alpha).
  out.f_basis = ambient_metric * range;

  Mat<Scalar> basis(p, p), image(p, p);
  basis << out.kernel_basis, out.f_basis;
  image << ambient_llt.solve(out.kernel_basis), alpha_matrix * out.f_basis;
  out.alpha_circ = basis.transpose().partialPivLu().solve(image.transpose()).transpose();
  return out;
}

/// Generalized-inverse metric (alpha_circ)^{-1} from a splitting.
template <typename Scalar>
[[nodiscard]] Mat<Scalar> metric_from_splitting(const Splitting<Scalar>& s) {
  return symmetrized(Mat<Scalar>(s.alpha_circ.inverse()));
}

/// Endpoint of the unit-parameter geodesic through (x, v) under a connector
/// field given as a coefficient stack. Classical RK4 on (x, xdot).
template <typename Scalar, typename CoeffField>
[[nodiscard]] Vec<Scalar> exp_map_with(CoeffField&& coeffs_at, const Vec<Scalar>& x, const Vec<Scalar>& v, int steps = 64) {
  require(x.size() == v.size(), "exp_map: point and vector differ in size");
  require(steps >= 1, "exp_map: steps must be positive");
  bool straight = true;
  auto accel = [&](const Vec<Scalar>& pos, const Vec<Scalar>& vel) -> Vec<Scalar> {
    const Tensor3<Scalar> gamma = coeffs_at(pos);
    Vec<Scalar> out(pos.size());
    for (std::size_t k = 0; k < gamma.size(); ++k) {
      out(static_cast<Eigen::Index>(k)) = -vel.dot(gamma[k] * vel);
    }
    if (!out.isZero(Scalar(0))) {
      straight = false;
    }
    return out;
  };

  const Scalar h = Scalar(1) / Scalar(steps);
  Vec<Scalar> pos = x, vel = v;
  for (int s = 0; s < steps; ++s) {
    const Vec<Scalar> k1x = vel;
    const Vec<Scalar> k1v = accel(pos, vel);
    const Vec<Scalar> k2x = vel + Scalar(0.5) * h * k1v;
    const Vec<Scalar> k2v = accel(pos + Scalar(0.5) * h * k1x, k2x);
    const Vec<Scalar> k3x = vel + Scalar(0.5) * h * k2v;
    const Vec<Scalar> k3v = accel(pos + Scalar(0.5) * h * k2x, k3x);
    const Vec<Scalar> k4x = vel + h * k3v;
    const Vec<Scalar> k4v = accel(pos + h * k3x, k4x);
    pos += h / Scalar(6) * (k1x + Scalar(2) * k2x + Scalar(2) * k3x + k4x);
    vel += h / Scalar(6) * (k1v + Scalar(2) * k2v + Scalar(2) * k3v + k4v);
    if (!pos.allFinite() || !vel.allFinite()) {
      throw ChartEscape("exp_map: geodesic left the chart");
    }
  }
  // Zero acceleration everywhere means a straight line; return it exactly.
  if (straight) {
    return x + v;
  }
  return pos;
}

template <typename Scalar>
[[nodiscard]] Vec<Scalar> exp_map(const ModelSpec<Scalar>& model, const Vec<Scalar>& x, const Vec<Scalar>& v, int steps = 64) {
  return exp_map_with<Scalar>([&model](const Vec<Scalar>& y) { return connector(model, y).coeffs; }, x, v, steps);
}

/// Contraction of the second fundamental form
/// D^2 psi - D psi . Gamma + Gamma_bar (D psi (x) D psi) against t.
template <typename Scalar>
[[nodiscard]] Vec<Scalar> second_fundamental_form(const MapSpec<Scalar>& mapspec,
                                                  const Connector<Scalar>& connector_n,
                                                  const Vec<Scalar>& x,
                                                  const Mat<Scalar>& t) {
  const Eigen::Index p = x.size();
  require(t.rows() == p && t.cols() == p, "second_fundamental_form: tensor shape");
  require(connector_n.dim() == p, "second_fundamental_form: connector dimension");
  const Mat<Scalar> jac = mapspec.d_psi(x);
  require(jac.rows() == mapspec.dim_q && jac.cols() == p, "second_fundamental_form: d_psi shape");
  const Vec<Scalar> hess = tensor_contract<Scalar>(mapspec.d2_psi(x), t);
  const Vec<Scalar> pulled = jac * connector_apply(connector_n, t);
  const Mat<Scalar> pushed = jac * t * jac.transpose();
  const Vec<Scalar> target = tensor_contract<Scalar>(mapspec.target_connector(mapspec.psi(x)), pushed);
  return hess - pulled + target;
}

/// 1/2 sum h_{beta gamma} (J alpha J^T)^{beta gamma}.
template <typename Scalar>
[[nodiscard]] Scalar energy_density(const MapSpec<Scalar>& mapspec,
                                    const Mat<Scalar>& metric_h,
                                    const ModelSpec<Scalar>& model,
                                    const Vec<Scalar>& x) {
  const Mat<Scalar> jac = mapspec.d_psi(x);
  const Mat<Scalar> pushed = jac * alpha(model, x) * jac.transpose();
  require(metric_h.rows() == pushed.rows() && metric_h.cols() == pushed.cols(), "energy_density: metric shape");
  return std::max(Scalar(0), Scalar(0.5) * metric_h.cwiseProduct(pushed).sum());
}

/// psi = identity with the model's own connector on the target.
template <typename Scalar>
[[nodiscard]] MapSpec<Scalar> identity_map(const ModelSpec<Scalar>& model) {
  const Eigen::Index p = model.dim;
  MapSpec<Scalar> m;
  m.dim_q = p;
  m.psi = [](const Vec<Scalar>& x) { return x; };
  m.d_psi = [p](const Vec<Scalar>&) { return Mat<Scalar>::Identity(p, p); };
  m.d2_psi = [p](const Vec<Scalar>&) { return zero_tensor<Scalar>(p, p, p); };
  m.target_connector = [model](const Vec<Scalar>& y) { return connector(model, y).coeffs; };
  return m;
}

/// Inclusion into Euclidean space of the same dimension (flat target).
template <typename Scalar>
[[nodiscard]] MapSpec<Scalar> euclidean_inclusion(Eigen::Index p) {
  MapSpec<Scalar> m;
  m.dim_q = p;
  m.psi = [](const Vec<Scalar>& x) { return x; };
  m.d_psi = [p](const Vec<Scalar>&) { return Mat<Scalar>::Identity(p, p); };
  m.d2_psi = [p](const Vec<Scalar>&) { return zero_tensor<Scalar>(p, p, p); };
  m.target_connector = [p](const Vec<Scalar>&) { return zero_tensor<Scalar>(p, p, p); };
  return m;
}

}  // namespace ilpkit

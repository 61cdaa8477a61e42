/**
 * @file mc.hpp
 * @brief Euler-Maruyama simulation, Monte Carlo means with standard errors,
 *        and sampling of the Gaussian variation process Lambda.
 *
 * Trajectory i always draws from the stream keyed by (master_seed, i), and
 * trajectories are reduced in fixed-size index blocks combined in a fixed
 * pairwise order, so results do not depend on the worker count.
 */
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "ilpkit/core.hpp"
#include "ilpkit/flow.hpp"
#include "ilpkit/geometry.hpp"

namespace ilpkit::mc {

using Engine = std::mt19937_64;

struct RngPolicy {
  std::uint64_t master_seed = 0;

  [[nodiscard]] Engine stream_for(std::uint64_t trajectory_index) const {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(trajectory_index),
                      static_cast<std::uint32_t>(trajectory_index >> 32), 0x696c70u};
    return Engine(seq);
  }
};

template <typename Scalar>
using Path = std::vector<Vec<Scalar>>;

template <typename Scalar>
using Projector = std::function<Vec<Scalar>(const Vec<Scalar>&)>;

template <typename Scalar>
struct MCSummary {
  std::vector<Scalar> times;
  std::vector<Vec<Scalar>> mean;
  std::vector<Vec<Scalar>> std_error;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

template <typename Scalar>
struct VariationSummary {
  Vec<Scalar> mean;
  Mat<Scalar> covariance;
  std::size_t count = 0;
};

/// Fixed trajectory block size for the order-insensitive reduction.
inline constexpr std::size_t kBlock = 64;

namespace detail {

template <typename Scalar>
Vec<Scalar> gaussian(Engine& rng, Eigen::Index m) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec<Scalar> z(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    z(i) = Scalar(normal(rng));
  }
  return z;
}

/// Runs `work(block_index)` for every block on up to `threads` workers.
inline void for_each_block(std::size_t blocks, unsigned threads, const std::function<void(std::size_t)>& work) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, blocks))));
  if (workers == 1) {
    for (std::size_t b = 0; b < blocks; ++b) {
      work(b);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < blocks; b = next++) {
        try {
          work(b);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) {
            failure = std::current_exception();
          }
        }
      }
    });
  }
  pool.clear();
  if (failure) {
    std::rethrow_exception(failure);
  }
}

/// Running mean and sum of squared deviations per grid time (Welford / Chan).
template <typename Scalar>
struct Moments {
  std::size_t count = 0;
  std::vector<Vec<Scalar>> mean;
  std::vector<Vec<Scalar>> m2;

  void add(const Path<Scalar>& path) {
    if (mean.empty()) {
      for (const auto& x : path) {
        mean.push_back(Vec<Scalar>::Zero(x.size()));
        m2.push_back(Vec<Scalar>::Zero(x.size()));
      }
    }
    ++count;
    const Scalar inv = Scalar(1) / Scalar(count);
    for (std::size_t t = 0; t < path.size(); ++t) {
      const Vec<Scalar> d = path[t] - mean[t];
      mean[t] += d * inv;
      m2[t] += d.cwiseProduct(path[t] - mean[t]);
    }
  }

  static Moments merge(const Moments& a, const Moments& b) {
    if (a.count == 0) return b;
    if (b.count == 0) return a;
    Moments out;
    out.count = a.count + b.count;
    const Scalar na = Scalar(a.count), nb = Scalar(b.count), n = Scalar(out.count);
    for (std::size_t t = 0; t < a.mean.size(); ++t) {
      const Vec<Scalar> d = b.mean[t] - a.mean[t];
      out.mean.push_back(a.mean[t] + d * (nb / n));
      out.m2.push_back(a.m2[t] + b.m2[t] + d.cwiseProduct(d) * (na * nb / n));
    }
    return out;
  }
};

template <typename T, typename Merge>
T pairwise_reduce(std::vector<T> items, Merge merge) {
  if (items.empty()) return T{};
  while (items.size() > 1) {
    std::vector<T> next;
    next.reserve((items.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < items.size(); i += 2) {
      next.push_back(merge(items[i], items[i + 1]));
    }
    if (items.size() % 2 == 1) {
      next.push_back(std::move(items.back()));
    }
    items = std::move(next);
  }
  return std::move(items.front());
}

}  // namespace detail

/// Generic Euler-Maruyama: X <- X + drift(X) h + diffusion(X) sqrt(h) Z, then
/// optional projection. Records every `substeps`-th state, n + 1 in total.
template <typename Scalar, typename Drift, typename Diffusion>
[[nodiscard]] Path<Scalar> euler_path(Drift&& drift, Diffusion&& diffusion, const Vec<Scalar>& x0, Scalar delta, int n,
                                      Engine& rng, const Projector<Scalar>& projector = {}, int substeps = 1) {
  require(n >= 1 && substeps >= 1, "euler_maruyama: need n >= 1 and substeps >= 1");
  require(delta > Scalar(0), "euler_maruyama: delta must be positive");
  using std::sqrt;
  const Scalar h = delta / Scalar(n * substeps);
  const Scalar root_h = sqrt(h);
  Path<Scalar> path;
  path.reserve(static_cast<std::size_t>(n) + 1);
  Vec<Scalar> x = projector ? projector(x0) : x0;
  path.push_back(x);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < substeps; ++s) {
      const Mat<Scalar> sig = diffusion(x);
      Vec<Scalar> next = x + drift(x) * h;
      if (sig.size() > 0) {
        next += sig * (root_h * detail::gaussian<Scalar>(rng, sig.cols()));
      }
      x = projector ? projector(next) : next;
      if (!x.allFinite()) {
        throw NonFiniteState("euler_maruyama: non-finite state at step " + std::to_string(i * substeps + s + 1));
      }
    }
    path.push_back(x);
  }
  return path;
}

/// Euler-Maruyama for dX = b dt + sigma dW.
template <typename Scalar>
[[nodiscard]] Path<Scalar> euler_maruyama(const ModelSpec<Scalar>& model, const Vec<Scalar>& x0, Scalar delta, int n,
                                          Engine& rng, const Projector<Scalar>& projector = {}, int substeps = 1) {
  return euler_path<Scalar>(model.drift, model.diffusion, x0, delta, n, rng, projector, substeps);
}

/// The intrinsic epsilon-family dX = (xi - eps^2 zeta) dt + eps sigma dW with
/// zeta = 1/2 Gamma(sigma sigma^T). Starts from x0 (Sigma_0 = 0) or, when
/// `initial_offset` is given, from exp_{x0}(eps * offset).
template <typename Scalar>
[[nodiscard]] Path<Scalar> intrinsic_family_path(const ModelSpec<Scalar>& model, const VectorFieldSpec<Scalar>& vf,
                                                 Scalar epsilon, const Vec<Scalar>& x0, Scalar delta, int n, Engine& rng,
                                                 const Projector<Scalar>& projector = {}, int substeps = 1,
                                                 const std::optional<Vec<Scalar>>& initial_offset = std::nullopt) {
  require(epsilon >= Scalar(0), "intrinsic_family_path: epsilon must be non-negative");
  const Scalar eps2 = epsilon * epsilon;
  auto drift = [&](const Vec<Scalar>& x) -> Vec<Scalar> {
    Vec<Scalar> d = vf.xi(x);
    if (eps2 > Scalar(0)) {
      d -= eps2 * Scalar(0.5) * connector_apply(connector(model, x), alpha(model, x));
    }
    return d;
  };
  auto diffusion = [&](const Vec<Scalar>& x) -> Mat<Scalar> {
    if (epsilon == Scalar(0)) {
      return Mat<Scalar>();
    }
    return epsilon * model.diffusion(x);
  };
  Vec<Scalar> start = x0;
  if (initial_offset && epsilon > Scalar(0)) {
    start = exp_map(model, x0, Vec<Scalar>(epsilon * *initial_offset));
  }
  return euler_path<Scalar>(drift, diffusion, start, delta, n, rng, projector, substeps);
}

/// Monte Carlo mean and standard error of `simulate(index, rng)` over `reps`
/// trajectories on the grid 0, delta/n, ..., delta.
template <typename Scalar>
[[nodiscard]] MCSummary<Scalar> mc_summary(const std::function<Path<Scalar>(std::size_t, Engine&)>& simulate,
                                           Scalar delta, int n, std::size_t reps, const RngPolicy& policy,
                                           unsigned threads = 1) {
  require(reps >= 2, "mc_mean: need at least two trajectories");
  const std::size_t blocks = (reps + kBlock - 1) / kBlock;
  std::vector<detail::Moments<Scalar>> partial(blocks);
  detail::for_each_block(blocks, threads, [&](std::size_t b) {
    detail::Moments<Scalar> acc;
    const std::size_t end = std::min(reps, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      Engine rng = policy.stream_for(i);
      acc.add(simulate(i, rng));
    }
    partial[b] = std::move(acc);
  });
  const auto total = detail::pairwise_reduce(std::move(partial), &detail::Moments<Scalar>::merge);

  MCSummary<Scalar> out;
  out.count = total.count;
  out.seed = policy.master_seed;
  using std::sqrt;
  for (int i = 0; i <= n; ++i) {
    out.times.push_back(i == n ? delta : delta * Scalar(i) / Scalar(n));
  }
  const Scalar denom = Scalar(total.count) * Scalar(total.count - 1);
  for (std::size_t t = 0; t < total.mean.size(); ++t) {
    out.mean.push_back(total.mean[t]);
    out.std_error.push_back((total.m2[t] / denom).cwiseMax(Scalar(0)).cwiseSqrt());
  }
  return out;
}

/// Gaussian initial-state sampler factor: L with L L^T = sigma0 (PSD).
template <typename Scalar>
[[nodiscard]] Mat<Scalar> psd_factor(const Mat<Scalar>& sigma0) {
  const Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(symmetrized(sigma0));
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal();
}

/// MC mean of the SDE from x0, or from x0 + N(0, sigma0) when sigma0 is given.
template <typename Scalar>
[[nodiscard]] MCSummary<Scalar> mc_mean(const ModelSpec<Scalar>& model, const Vec<Scalar>& x0, Scalar delta, int n,
                                        std::size_t reps, const RngPolicy& policy, const Projector<Scalar>& projector = {},
                                        int substeps = 1, unsigned threads = 1,
                                        const std::optional<Mat<Scalar>>& sigma0 = std::nullopt) {
  std::optional<Mat<Scalar>> factor;
  if (sigma0 && !sigma0->isZero(Scalar(0))) {
    factor = psd_factor(*sigma0);
  }
  auto simulate = [&](std::size_t, Engine& rng) {
    Vec<Scalar> start = x0;
    if (factor) {
      start += *factor * detail::gaussian<Scalar>(rng, factor->cols());
    }
    return euler_maruyama(model, start, delta, n, rng, projector, substeps);
  };
  return mc_summary<Scalar>(simulate, delta, n, reps, policy, threads);
}

/// Samples Lambda_delta from dLambda = D xi(x_t) Lambda dt + sigma(x_t) dW,
/// Lambda_0 ~ N(0, sigma0), by fine-step Euler-Maruyama along the deterministic
/// flow (refined by RK4 inside each grid interval), and returns its empirical
/// mean and covariance.
template <typename Scalar>
[[nodiscard]] VariationSummary<Scalar> variation_samples(const FlowGrid<Scalar>& grid, const ModelSpec<Scalar>& model,
                                                         const VectorFieldSpec<Scalar>& vf, const Mat<Scalar>& sigma0,
                                                         std::size_t reps, const RngPolicy& policy, int substeps = 20,
                                                         unsigned threads = 1) {
  require(reps >= 2 && substeps >= 1, "variation_samples: need reps >= 2 and substeps >= 1");
  const std::size_t n = grid.steps();
  require(n >= 1, "variation_samples: empty grid");
  const Eigen::Index p = grid.dim();

  std::vector<Mat<Scalar>> jac, sig;
  std::vector<Scalar> h;
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar dt = grid.times[i + 1] - grid.times[i];
    const FlowGrid<Scalar> inner = integrate_flow(vf, grid.points[i], dt, substeps);
    for (int s = 0; s < substeps; ++s) {
      const Vec<Scalar>& x = inner.points[static_cast<std::size_t>(s)];
      jac.push_back(vf.d_xi(x));
      sig.push_back(model.diffusion(x));
      h.push_back(dt / Scalar(substeps));
    }
  }
  const Mat<Scalar> factor = psd_factor(sigma0);
  const bool random_start = !sigma0.isZero(Scalar(0));

  struct Block {
    std::size_t count = 0;
    Vec<Scalar> mean;
    Mat<Scalar> comoment;
  };
  const std::size_t blocks = (reps + kBlock - 1) / kBlock;
  std::vector<Block> partial(blocks);
  detail::for_each_block(blocks, threads, [&](std::size_t b) {
    Block acc{0, Vec<Scalar>::Zero(p), Mat<Scalar>::Zero(p, p)};
    const std::size_t end = std::min(reps, (b + 1) * kBlock);
    for (std::size_t r = b * kBlock; r < end; ++r) {
      Engine rng = policy.stream_for(r);
      Vec<Scalar> lam = random_start ? Vec<Scalar>(factor * detail::gaussian<Scalar>(rng, p)) : Vec<Scalar>::Zero(p);
      for (std::size_t k = 0; k < jac.size(); ++k) {
        using std::sqrt;
        lam += jac[k] * lam * h[k] + sig[k] * (sqrt(h[k]) * detail::gaussian<Scalar>(rng, sig[k].cols()));
      }
      ++acc.count;
      const Vec<Scalar> d = lam - acc.mean;
      acc.mean += d / Scalar(acc.count);
      acc.comoment += d * (lam - acc.mean).transpose();
    }
    partial[b] = std::move(acc);
  });
  auto merge = [](const Block& a, const Block& b) {
    if (a.count == 0) return b;
    if (b.count == 0) return a;
    Block out;
    out.count = a.count + b.count;
    const Scalar na = Scalar(a.count), nb = Scalar(b.count), nt = Scalar(out.count);
    const Vec<Scalar> d = b.mean - a.mean;
    out.mean = a.mean + d * (nb / nt);
    out.comoment = a.comoment + b.comoment + d * d.transpose() * (na * nb / nt);
    return out;
  };
  const Block total = detail::pairwise_reduce(std::move(partial), merge);
  VariationSummary<Scalar> out;
  out.count = total.count;
  out.mean = total.mean;
  out.covariance = symmetrized(Mat<Scalar>(total.comoment / Scalar(total.count - 1)));
  return out;
}

}  // namespace ilpkit::mc

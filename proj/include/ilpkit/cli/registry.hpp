/**
 * @file registry.hpp
 * @brief Maps configured model names to the built-in models and resolves the
 *        initial state and covariance.
 */
#pragma once

#include <optional>
#include <string>

#include "ilpkit/cli/config.hpp"
#include "ilpkit/geometry.hpp"
#include "ilpkit/mc.hpp"
#include "ilpkit/tracking.hpp"

namespace ilpkit::cli {

/// A configured model ready for the flow, ILP and MC stages.
struct Experiment {
  std::string name;
  ModelSpec<double> model;
  VectorFieldSpec<double> field;
  MapSpec<double> map;
  mc::Projector<double> projector;
  Eigen::VectorXd x0;
  Eigen::MatrixXd sigma0;
  /// Set for ts2-tracking, which has a specialized ILP recursion.
  std::optional<tracking::TrackingParams<double>> tracking;
};

/// Stream index reserved for sampling the initial state; trajectories use
/// indices 0 .. reps-1.
inline constexpr std::uint64_t kInitialStateStream = ~std::uint64_t{0};

/// Builds the experiment for `config`. `gamma_override` replaces the tracking
/// noise scale (used for the explosive-noise fallback). Throws ConfigError for
/// parameter values the model cannot accept.
[[nodiscard]] Experiment resolve_experiment(const ExperimentConfig& config,
                                            std::optional<double> gamma_override = std::nullopt);

}  // namespace ilpkit::cli

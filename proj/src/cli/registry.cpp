#include "ilpkit/cli/registry.hpp"

#include <cmath>

#include "ilpkit/models.hpp"

namespace ilpkit::cli {

namespace {

Eigen::MatrixXd row_major(const std::vector<double>& values, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
    }
  }
  return m;
}

Eigen::Index square_side(const ExperimentConfig& config, const std::string& key, std::size_t count) {
  const auto side = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(count))));
  if (side < 1 || static_cast<std::size_t>(side * side) != count) {
    throw config.error(key, "expected p*p numbers for a square matrix, got " + std::to_string(count));
  }
  return side;
}

double positive(const ExperimentConfig& config, const std::string& key, double fallback) {
  const double v = config.param(key, fallback);
  if (!(v > 0.0)) throw config.error("model." + key, "must be positive");
  return v;
}

double non_negative(const ExperimentConfig& config, const std::string& key, double fallback) {
  const double v = config.param(key, fallback);
  if (!(v >= 0.0)) throw config.error("model." + key, "must be non-negative");
  return v;
}

Experiment from_builtin(models::BuiltinModel<double> b) {
  Experiment e;
  e.name = b.name;
  e.model = std::move(b.model);
  e.field = std::move(b.field);
  e.map = std::move(b.map);
  e.projector = std::move(b.projector);
  return e;
}

Eigen::VectorXd explicit_x0(const ExperimentConfig& config, Eigen::Index dim) {
  if (config.x0_kind == InitialStateKind::Sampled) {
    throw config.error("run.x0", "'sampled' is only available for ts2-tracking");
  }
  if (static_cast<Eigen::Index>(config.x0.size()) != dim) {
    throw config.error("run.x0", "expected " + std::to_string(dim) + " numbers, got " + std::to_string(config.x0.size()));
  }
  return Eigen::Map<const Eigen::VectorXd>(config.x0.data(), dim);
}

Experiment tracking_experiment(const ExperimentConfig& config, std::optional<double> gamma_override) {
  tracking::TrackingParams<double> p;
  p.lambda_damping = non_negative(config, "lambda", 0.5);
  p.gamma_noise = gamma_override ? *gamma_override : non_negative(config, "gamma", 5.2e3);
  p.speed = positive(config, "speed", 200.0);
  const double accel = non_negative(config, "accel", 50.0);
  if (config.has_param("fallback_gamma")) (void)positive(config, "fallback_gamma", 1.0);

  const auto tm = tracking::tracking_model(p);
  Experiment e;
  e.name = "ts2-tracking";
  e.model = tm.model;
  e.field = tm.field;
  e.map = tm.inclusion;
  e.projector = tm.projector;
  e.tracking = p;
  if (config.x0_kind == InitialStateKind::Sampled) {
    mc::Engine rng = mc::RngPolicy{config.master_seed}.stream_for(kInitialStateStream);
    e.x0 = tracking::sample_state<double>(p.speed, accel, rng).stacked();
  } else {
    if (config.x0.size() != 6) throw config.error("run.x0", "expected 6 numbers (v then a) or 'sampled'");
    const Eigen::VectorXd raw = Eigen::Map<const Eigen::VectorXd>(config.x0.data(), 6);
    if (raw.head<3>().squaredNorm() == 0.0) throw config.error("run.x0", "velocity must be non-zero");
    e.x0 = tm.projector(raw);
  }
  return e;
}

}  // namespace

Experiment resolve_experiment(const ExperimentConfig& config, std::optional<double> gamma_override) {
  Experiment e;
  if (config.model_name == "ts2-tracking") {
    e = tracking_experiment(config, gamma_override);
  } else if (config.model_name == "scalar-ou") {
    const double kappa = config.param("kappa", 1.0);
    e = from_builtin(models::scalar_ou(kappa, non_negative(config, "sigma", 0.5)));
    e.x0 = explicit_x0(config, 1);
  } else if (config.model_name == "linear-gaussian") {
    Eigen::MatrixXd a = models::default_linear_drift<double>();
    if (config.has_param("drift")) {
      const auto& v = config.model_params.at("drift");
      const Eigen::Index p = square_side(config, "model.drift", v.size());
      a = row_major(v, p, p);
    }
    const Eigen::Index p = a.rows();
    Eigen::MatrixXd sigma = p == 2 ? models::default_linear_diffusion<double>() : Eigen::MatrixXd::Identity(p, p);
    if (config.has_param("diffusion")) {
      const auto& v = config.model_params.at("diffusion");
      if (v.size() % static_cast<std::size_t>(p) != 0) {
        throw config.error("model.diffusion", "expected p*m numbers with p = " + std::to_string(p));
      }
      sigma = row_major(v, p, static_cast<Eigen::Index>(v.size()) / p);
    }
    e = from_builtin(models::linear_gaussian(a, sigma));
    e.x0 = explicit_x0(config, p);
  } else if (config.model_name == "polar-demo") {
    const double kappa = config.param("kappa", 0.5);
    e = from_builtin(models::polar_demo(kappa, positive(config, "sigma", 0.3)));
    e.x0 = explicit_x0(config, 2);
    if (!(e.x0(0) > 0.0)) throw config.error("run.x0", "radius must be positive");
  } else {
    throw config.error("model.name", "unknown model '" + config.model_name + "'");
  }

  const Eigen::Index p = e.model.dim;
  if (config.sigma0.empty()) {
    e.sigma0 = Eigen::MatrixXd::Zero(p, p);
  } else {
    if (config.sigma0.size() != static_cast<std::size_t>(p * p)) {
      throw config.error("run.sigma0", "expected " + std::to_string(p * p) + " numbers (row-major) or 'zero'");
    }
    e.sigma0 = row_major(config.sigma0, p, p);
    const double scale = std::max(1.0, e.sigma0.cwiseAbs().maxCoeff());
    if ((e.sigma0 - e.sigma0.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw config.error("run.sigma0", "must be symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(e.sigma0);
    if (eig.eigenvalues().minCoeff() < -1e-12 * scale) throw config.error("run.sigma0", "must be positive semidefinite");
  }
  return e;
}

}  // namespace ilpkit::cli

#include "ilpkit/cli/experiment.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ilpkit/cli/registry.hpp"
#include "ilpkit/ilp.hpp"
#include "ilpkit/mc.hpp"
#include "ilpkit/tracking.hpp"

namespace ilpkit::cli {

namespace {

constexpr const char* kVersion = "0.1.0";

std::string format_vector(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out += (i == 0 ? "" : ", ") + format_number(v(i));
  }
  return out;
}

std::string format_matrix(const Eigen::MatrixXd& m) {
  if (m.isZero(0.0)) return "zero";
  const Eigen::MatrixXd rows = m.transpose();
  return format_vector(Eigen::Map<const Eigen::VectorXd>(rows.data(), rows.size()));
}

std::vector<double> grid_times(double delta, int n) {
  std::vector<double> t;
  for (int i = 0; i <= n; ++i) t.push_back(i == n ? delta : delta * i / n);
  return t;
}

RunReport start_report(const std::string& command, const ExperimentConfig& config, const Experiment& e) {
  RunReport r;
  r.command = command;
  r.model_name = config.model_name;
  r.seed = config.master_seed;
  r.config_echo = config.echo;
  if (e.tracking) {
    r.effective.emplace_back("lambda", format_number(e.tracking->lambda_damping));
    r.effective.emplace_back("gamma", format_number(e.tracking->gamma_noise));
    r.effective.emplace_back("speed", format_number(e.tracking->speed));
  }
  r.effective.emplace_back("x0", format_vector(e.x0));
  r.effective.emplace_back("sigma0", format_matrix(e.sigma0));
  r.effective.emplace_back("delta", format_number(config.delta));
  r.effective.emplace_back("steps", std::to_string(config.steps));
  return r;
}

ILPResult<double> ilp_series(const ExperimentConfig& config, const Experiment& e) {
  if (e.tracking && e.sigma0.isZero(0.0)) {
    return tracking::ilp_tracking(tracking::TS2State<double>::from(e.x0), *e.tracking, config.delta, config.steps);
  }
  return compute_ilp(e.model, e.map, e.field, e.x0, e.sigma0, config.delta, config.steps);
}

mc::MCSummary<double> simulate(const ExperimentConfig& config, const Experiment& e, unsigned threads) {
  std::optional<Eigen::MatrixXd> factor;
  if (!e.sigma0.isZero(0.0)) factor = mc::psd_factor(e.sigma0);
  const std::function<mc::Path<double>(std::size_t, mc::Engine&)> path = [&](std::size_t, mc::Engine& rng) {
    Eigen::VectorXd start = e.x0;
    if (factor) start += *factor * mc::detail::gaussian<double>(rng, factor->cols());
    mc::Path<double> xs = mc::euler_maruyama(e.model, start, config.delta, config.steps, rng, e.projector, config.mc_substeps);
    for (auto& x : xs) x = e.map.psi(x);
    return xs;
  };
  return mc::mc_summary<double>(path, config.delta, config.steps, config.reps, mc::RngPolicy{config.master_seed},
                                threads);
}

struct Simulated {
  Experiment experiment;
  mc::MCSummary<double> summary;
  std::vector<std::string> notes;
};

/// Runs the MC stage; for ts2-tracking with `fallback_gamma` set, a blow-up
/// of the Euler scheme triggers one rerun at the fallback noise scale.
Simulated simulate_with_fallback(const ExperimentConfig& config, const RunOptions& options) {
  require_mc_reps(config);
  Experiment e = resolve_experiment(config);
  try {
    auto summary = simulate(config, e, options.threads);
    return {std::move(e), std::move(summary), {}};
  } catch (const Error& failure) {
    const bool explosive = dynamic_cast<const NonFiniteState*>(&failure) != nullptr ||
                           dynamic_cast<const ZeroVelocity*>(&failure) != nullptr;
    if (!explosive || !e.tracking || !config.has_param("fallback_gamma")) throw;
    const double fallback = config.param("fallback_gamma", 0.0);
    std::ostringstream note;
    note << "gamma = " << format_number(e.tracking->gamma_noise)
         << " is numerically explosive under Euler-Maruyama with " << config.steps * config.mc_substeps
         << " steps (" << failure.what() << "); ILP and simulation were rerun with fallback_gamma = "
         << format_number(fallback) << ".";
    Experiment fb = resolve_experiment(config, fallback);
    auto summary = simulate(config, fb, options.threads);
    return {std::move(fb), std::move(summary), {note.str()}};
  }
}

std::vector<std::string> component_columns(const std::string& prefix, Eigen::Index q) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < q; ++i) out.push_back(prefix + "_" + std::to_string(i));
  return out;
}

void append(std::vector<std::string>& to, const std::vector<std::string>& from) { to.insert(to.end(), from.begin(), from.end()); }

}  // namespace

std::string format_number(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

std::string version_string() {
  return std::string("ilpkit ") + kVersion + " (Eigen " + std::to_string(EIGEN_WORLD_VERSION) + "." +
         std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION) + ")";
}

RunReport run_ilp(const ExperimentConfig& config) {
  const Experiment e = resolve_experiment(config);
  const ILPResult<double> ilp = ilp_series(config, e);
  RunReport r = start_report("run-ilp", config, e);
  const Eigen::Index q = ilp.tangent.size();
  r.csv_header = {"time"};
  append(r.csv_header, component_columns("x", q));
  append(r.csv_header, component_columns("m", q));
  append(r.csv_header, component_columns("projected", q));
  const auto times = grid_times(config.delta, config.steps);
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::vector<double> row{times[i]};
    for (const auto* series : {&ilp.base_series, &ilp.tangent_series, &ilp.projected_series}) {
      const Eigen::VectorXd& v = (*series)[i];
      row.insert(row.end(), v.data(), v.data() + v.size());
    }
    r.rows.push_back(std::move(row));
  }
  if (e.tracking && e.sigma0.isZero(0.0)) r.notes.emplace_back("ILP from the specialized tracking recursion.");
  return r;
}

RunReport run_mc(const ExperimentConfig& config, const RunOptions& options) {
  const Simulated sim = simulate_with_fallback(config, options);
  RunReport r = start_report("run-mc", config, sim.experiment);
  r.effective.emplace_back("reps", std::to_string(config.reps));
  r.effective.emplace_back("mc_substeps", std::to_string(config.mc_substeps));
  r.notes = sim.notes;
  const Eigen::Index q = sim.summary.mean.front().size();
  r.csv_header = {"time"};
  append(r.csv_header, component_columns("mean", q));
  append(r.csv_header, component_columns("stderr", q));
  for (std::size_t i = 0; i < sim.summary.times.size(); ++i) {
    std::vector<double> row{sim.summary.times[i]};
    const auto& m = sim.summary.mean[i];
    const auto& s = sim.summary.std_error[i];
    row.insert(row.end(), m.data(), m.data() + m.size());
    row.insert(row.end(), s.data(), s.data() + s.size());
    r.rows.push_back(std::move(row));
  }
  return r;
}

RunReport run_compare(const ExperimentConfig& config, const RunOptions& options) {
  const Simulated sim = simulate_with_fallback(config, options);
  const ILPResult<double> ilp = ilp_series(config, sim.experiment);
  RunReport r = start_report("compare", config, sim.experiment);
  r.effective.emplace_back("reps", std::to_string(config.reps));
  r.effective.emplace_back("mc_substeps", std::to_string(config.mc_substeps));
  r.notes = sim.notes;

  const Eigen::Index q = ilp.tangent.size();
  r.csv_header = {"time"};
  for (const char* prefix : {"mean", "stderr", "ode", "ilp", "dev_ilp", "dev_ode"}) {
    append(r.csv_header, component_columns(prefix, q));
  }
  r.components.resize(static_cast<std::size_t>(q));
  for (Eigen::Index c = 0; c < q; ++c) r.components[static_cast<std::size_t>(c)].component = c;

  const std::size_t count = sim.summary.times.size();
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::VectorXd& mean = sim.summary.mean[i];
    const Eigen::VectorXd& se = sim.summary.std_error[i];
    const Eigen::VectorXd& ode = ilp.base_series[i];
    const Eigen::VectorXd& est = ilp.projected_series[i];
    const Eigen::VectorXd dev_ilp = (est - mean).cwiseAbs();
    const Eigen::VectorXd dev_ode = (ode - mean).cwiseAbs();
    std::vector<double> row{sim.summary.times[i]};
    for (const Eigen::VectorXd* v : {&mean, &se, &ode, &est, &dev_ilp, &dev_ode}) {
      row.insert(row.end(), v->data(), v->data() + v->size());
    }
    r.rows.push_back(std::move(row));
    for (Eigen::Index c = 0; c < q; ++c) {
      auto& s = r.components[static_cast<std::size_t>(c)];
      s.mad_ilp += dev_ilp(c);
      s.mad_ode += dev_ode(c);
      s.ilp_within_2se += dev_ilp(c) <= 2.0 * se(c) ? 1 : 0;
      s.ode_within_2se += dev_ode(c) <= 2.0 * se(c) ? 1 : 0;
      ++s.times;
    }
  }
  for (auto& s : r.components) {
    s.mad_ilp /= static_cast<double>(s.times);
    s.mad_ode /= static_cast<double>(s.times);
  }
  return r;
}

std::string format_csv(const RunReport& report) {
  std::string out;
  for (std::size_t i = 0; i < report.csv_header.size(); ++i) {
    out += (i == 0 ? "" : ",") + report.csv_header[i];
  }
  out += '\n';
  for (const auto& row : report.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += (i == 0 ? "" : ",") + format_number(row[i]);
    }
    out += '\n';
  }
  return out;
}

std::string format_report(const RunReport& report) {
  std::ostringstream out;
  out << version_string() << '\n';
  out << "command: " << report.command << '\n';
  out << "model: " << report.model_name << '\n';
  out << "seed: " << report.seed << '\n';
  out << "rows: " << report.rows.size() << '\n';
  out << "\n[effective parameters]\n";
  for (const auto& [k, v] : report.effective) out << k << " = " << v << '\n';
  if (!report.components.empty()) {
    out << "\n[summary]\n";
    out << "component,mad_ilp,mad_ode,ilp_within_2se,ode_within_2se,times\n";
    for (const auto& s : report.components) {
      out << s.component << ',' << format_number(s.mad_ilp) << ',' << format_number(s.mad_ode) << ','
          << s.ilp_within_2se << ',' << s.ode_within_2se << ',' << s.times << '\n';
    }
  }
  if (!report.notes.empty()) {
    out << "\n[notes]\n";
    for (const auto& n : report.notes) out << n << '\n';
  }
  out << "\n[config]\n";
  for (const auto& [k, v] : report.config_echo) out << k << " = " << v << '\n';
  return out.str();
}

std::string write_outputs(const RunReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  const std::string csv_path = (base / (report.command + ".csv")).string();
  {
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    csv << format_csv(report);
    if (!csv) throw std::runtime_error("cannot write " + csv_path);
  }
  const std::string report_path = (base / (report.command + "_report.txt")).string();
  std::ofstream txt(report_path, std::ios::binary | std::ios::trunc);
  txt << format_report(report);
  if (!txt) throw std::runtime_error("cannot write " + report_path);
  return csv_path;
}

}  // namespace ilpkit::cli

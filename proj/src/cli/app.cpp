#include "ilpkit/cli/app.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "ilpkit/cli/config.hpp"
#include "ilpkit/cli/experiment.hpp"
#include "ilpkit/cli/validate.hpp"
#include "ilpkit/core.hpp"

namespace ilpkit::cli {

namespace {

struct Overrides {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<int> steps;
  std::vector<std::string> inject;
};

ExperimentConfig load_with_overrides(const Overrides& o) {
  ExperimentConfig cfg = load_config(o.config_path);
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.reps) {
    if (*o.reps < 1) throw ConfigError("--reps", 0, "run.reps", "reps must be at least 1");
    cfg.reps = *o.reps;
  }
  if (o.steps) {
    if (*o.steps < 1) throw ConfigError("--steps", 0, "run.steps", "steps must be at least 1");
    cfg.steps = *o.steps;
  }
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  return cfg;
}

void print_summary(const RunReport& report, const std::string& csv_path, std::ostream& out) {
  out << report.command << ": " << report.rows.size() << " rows -> " << csv_path << '\n';
  for (const auto& s : report.components) {
    out << "  component " << s.component << ": MAD ilp " << format_number(s.mad_ilp) << ", ode "
        << format_number(s.mad_ode) << ", ilp within 2 stderr " << s.ilp_within_2se << "/" << s.times << '\n';
  }
  for (const auto& n : report.notes) out << "  note: " << n << '\n';
}

}  // namespace

unsigned threads_from_env() {
  const char* raw = std::getenv("ILP_THREADS");
  if (raw == nullptr || *raw == '\0') return std::max(1u, std::thread::hardware_concurrency());
  const std::string text(raw);
  unsigned v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || v == 0) {
    throw ConfigError("ILP_THREADS", 0, "ILP_THREADS", "expected a positive integer, got '" + text + "'");
  }
  return v;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Intrinsic location parameter toolkit", "ilpkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  Overrides o;
  auto add_run_options = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Experiment configuration file")->required();
    sub->add_option("--out", o.out_dir, "Output directory (overrides [output] dir)");
    sub->add_option("--seed", o.seed, "Master seed (overrides [run] seed)");
    sub->add_option("--reps", o.reps, "Monte Carlo trajectories (overrides [run] reps)");
    sub->add_option("--steps", o.steps, "Grid subintervals (overrides [run] steps)");
  };
  CLI::App* ilp_cmd = app.add_subcommand("run-ilp", "Flow, covariance and ILP series");
  CLI::App* mc_cmd = app.add_subcommand("run-mc", "Monte Carlo mean and standard error");
  CLI::App* compare_cmd = app.add_subcommand("compare", "ILP and ODE against the Monte Carlo mean");
  CLI::App* validate_cmd = app.add_subcommand("validate", "Cross-module invariant checks");
  for (CLI::App* sub : {ilp_cmd, mc_cmd, compare_cmd}) add_run_options(sub);
  validate_cmd->add_option("--out", o.out_dir, "Also write validate_report.txt here");
  validate_cmd->add_option("--inject", o.inject, "Test hook: gamma-sign or tau-order")
      ->check(CLI::IsMember({"gamma-sign", "tau-order"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const unsigned threads = threads_from_env();
    if (validate_cmd->parsed()) {
      ValidationHooks hooks;
      for (const auto& name : o.inject) {
        hooks.flip_connector_sign |= name == "gamma-sign";
        hooks.swap_tau_order |= name == "tau-order";
      }
      const auto rows = run_validate(hooks, threads);
      const std::string table = format_validation(rows);
      out << table;
      if (!o.out_dir.empty()) {
        std::filesystem::create_directories(o.out_dir);
        std::ofstream(std::filesystem::path(o.out_dir) / "validate_report.txt", std::ios::binary) << version_string()
                                                                                                   << "\n\n"
                                                                                                   << table;
      }
      return all_passed(rows) ? kExitOk : kExitValidation;
    }
    const ExperimentConfig cfg = load_with_overrides(o);
    RunReport report;
    if (ilp_cmd->parsed()) {
      report = run_ilp(cfg);
    } else if (mc_cmd->parsed()) {
      report = run_mc(cfg, RunOptions{threads});
    } else {
      report = run_compare(cfg, RunOptions{threads});
    }
    print_summary(report, write_outputs(report, cfg.output_dir), out);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitOther;
  }
}

}  // namespace ilpkit::cli

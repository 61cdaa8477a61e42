/**
 * @file experiment.hpp
 * @brief Experiment orchestration (ILP, Monte Carlo, comparison) and the CSV
 *        and plain-text report writers.
 *
 * Every output is a pure function of the configuration: no timestamps, host
 * names or thread counts enter the CSV or the report.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ilpkit/cli/config.hpp"

namespace ilpkit::cli {

struct RunOptions {
  /// Upper bound on Monte Carlo worker threads.
  unsigned threads = 1;
};

/// Per-component summary of a comparison against the MC mean.
struct ComponentSummary {
  Eigen::Index component = 0;
  double mad_ilp = 0.0;
  double mad_ode = 0.0;
  std::size_t ilp_within_2se = 0;
  std::size_t ode_within_2se = 0;
  std::size_t times = 0;
};

struct RunReport {
  std::string command;
  std::string model_name;
  std::uint64_t seed = 0;
  /// Model parameters actually used (after any fallback).
  std::vector<std::pair<std::string, std::string>> effective;
  std::vector<std::pair<std::string, std::string>> config_echo;
  std::vector<std::string> csv_header;
  std::vector<std::vector<double>> rows;
  std::vector<ComponentSummary> components;
  std::vector<std::string> notes;
};

/// Flow, derivative flow, covariance path and ILP on the configured grid.
/// CSV columns: time, x_i, m_i, projected_i.
[[nodiscard]] RunReport run_ilp(const ExperimentConfig& config);

/// Euler-Maruyama Monte Carlo mean and standard error on the same grid.
/// CSV columns: time, mean_i, stderr_i. Requires reps >= 2.
[[nodiscard]] RunReport run_mc(const ExperimentConfig& config, const RunOptions& options = {});

/// Joins the ILP and MC runs. CSV columns: time, mean_i, stderr_i, ode_i,
/// ilp_i, dev_ilp_i = |ilp_i - mean_i|, dev_ode_i = |ode_i - mean_i|.
/// The summary holds mean absolute deviations and 2-stderr coverage counts.
[[nodiscard]] RunReport run_compare(const ExperimentConfig& config, const RunOptions& options = {});

/// Header plus one row per grid time, 17 significant digits, LF endings.
[[nodiscard]] std::string format_csv(const RunReport& report);

/// Human-readable report: versions, seed, effective parameters, summary,
/// notes and the configuration echo.
[[nodiscard]] std::string format_report(const RunReport& report);

/// Writes `<dir>/<command>.csv` and `<dir>/<command>_report.txt`; returns the
/// CSV path.
std::string write_outputs(const RunReport& report, const std::string& dir);

/// 17 significant digits, '.' decimal separator, independent of locale.
[[nodiscard]] std::string format_number(double value);

[[nodiscard]] std::string version_string();

}  // namespace ilpkit::cli

/**
 * @file config.hpp
 * @brief Experiment configuration: a sectioned key-value text format with
 *        strict key checking and line-accurate diagnostics.
 *
 * Example:
 * @code
 * [model]
 * name = ts2-tracking
 * gamma = 5200
 *
 * [run]
 * x0 = sampled
 * delta = 1
 * steps = 25
 * reps = 2000
 * seed = 1
 *
 * [output]
 * dir = out/ts2
 * @endcode
 */
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilpkit::cli {

/// Invalid or inconsistent configuration. `key` is "section.key" when known,
/// `line` is 1-based (0 when the problem is not tied to a line).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, std::string key, const std::string& message);

  [[nodiscard]] const std::string& key() const { return key_; }
  [[nodiscard]] int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

enum class InitialStateKind { Explicit, Sampled };

struct ExperimentConfig {
  /// File path or a label for in-memory text; used in diagnostics.
  std::string source = "<config>";

  std::string model_name;
  /// Numeric model parameters (scalars are one-element lists).
  std::map<std::string, std::vector<double>> model_params;

  InitialStateKind x0_kind = InitialStateKind::Explicit;
  std::vector<double> x0;
  /// Row-major p x p initial covariance; empty means zero.
  std::vector<double> sigma0;

  double delta = 1.0;
  int steps = 25;
  std::size_t reps = 1000;
  std::uint64_t master_seed = 0;
  int mc_substeps = 1;

  std::string output_dir = ".";

  /// "section.key" -> line, for diagnostics raised after parsing.
  std::map<std::string, int> lines;
  /// "section.key = value" in file order, echoed into reports.
  std::vector<std::pair<std::string, std::string>> echo;

  /// Scalar model parameter or `fallback` when absent.
  [[nodiscard]] double param(const std::string& key, double fallback) const;
  [[nodiscard]] bool has_param(const std::string& key) const { return model_params.count(key) != 0; }
  [[nodiscard]] int line_of(const std::string& dotted_key) const;
  [[nodiscard]] ConfigError error(const std::string& dotted_key, const std::string& message) const;
};

/// Model names understood by the registry, with their parameter keys.
[[nodiscard]] const std::map<std::string, std::vector<std::string>>& model_parameter_keys();

/// Parses configuration text. Throws ConfigError on syntax errors, unknown
/// sections or keys, duplicates, bad numbers, or violated invariants
/// (steps >= 1, delta > 0, reps >= 1, mc_substeps >= 1).
[[nodiscard]] ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");

/// Reads and parses a configuration file.
[[nodiscard]] ExperimentConfig load_config(const std::string& path);

/// MC commands need at least two trajectories for a standard error.
void require_mc_reps(const ExperimentConfig& config);

}  // namespace ilpkit::cli

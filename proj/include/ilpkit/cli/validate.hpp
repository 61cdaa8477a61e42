/**
 * @file validate.hpp
 * @brief Cross-module invariant suite with measured residuals, thresholds and
 *        mutation hooks that must make the matching check fail.
 */
#pragma once

#include <string>
#include <vector>

namespace ilpkit::cli {

/// Deliberate defects injected into the objects under test.
struct ValidationHooks {
  /// Negate the closed-form tracking connector.
  bool flip_connector_sign = false;
  /// Accumulate tau_{t_i}^delta as tau_step[i] * tau_{t_{i+1}}^delta.
  bool swap_tau_order = false;
};

struct ValidationRow {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  /// true: pass when measured >= threshold; false: pass when measured <= threshold.
  bool lower_bound = false;
  bool passed = false;
};

/// Runs every invariant check. MC-based rows use `threads` workers.
[[nodiscard]] std::vector<ValidationRow> run_validate(const ValidationHooks& hooks = {}, unsigned threads = 1);

[[nodiscard]] bool all_passed(const std::vector<ValidationRow>& rows);

/// Fixed-width pass/fail table.
[[nodiscard]] std::string format_validation(const std::vector<ValidationRow>& rows);

}  // namespace ilpkit::cli

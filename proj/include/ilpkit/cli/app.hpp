/**
 * @file app.hpp
 * @brief Command-line entry point: `run-ilp`, `run-mc`, `compare`, `validate`.
 *
 * Exit status: 0 success, 2 configuration or usage error, 3 numeric failure,
 * 4 validation failure, 1 any other failure (for example an unwritable
 * output directory).
 */
#pragma once

#include <iosfwd>
#include <optional>
#include <string>

namespace ilpkit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitValidation = 4;

/// Worker count from ILP_THREADS (a positive integer), else the hardware
/// concurrency. Throws ConfigError for malformed values.
[[nodiscard]] unsigned threads_from_env();

/// Parses arguments, runs the command and returns the exit status.
[[nodiscard]] int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ilpkit::cli

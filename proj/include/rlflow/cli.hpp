#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlflow/config.hpp"

namespace rlflow {

enum ExitCode : int {
  kExitOk = 0,
  kExitVerdictFailed = 1,
  kExitConfigError = 2,
  kExitNumericalFailure = 3,
};

struct CliOptions {
  std::string subcommand;
  /// Empty: use the subcommand's default configuration.
  std::string config_path;
  /// Empty: use the configuration's "output" entry.
  std::string out_dir;
  std::size_t workers = 1;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

/// The invariant suite behind `verify`: checks on the configured field and grid
/// plus fixed benchmarks (change of variables, separable oracle, mass law).
std::vector<CheckResult> verify(const RunConfig& config);

/// Parses, runs and writes artifacts; returns the process exit code. Nothing
/// is written when the configuration is rejected.
int run(const CliOptions& options, std::ostream& out, std::ostream& err);

}  // namespace rlflow

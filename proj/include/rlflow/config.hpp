#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlflow/experiments.hpp"
#include "rlflow/fields.hpp"
#include "rlflow/grid.hpp"
#include "rlflow/transport.hpp"

namespace rlflow {

inline constexpr int kSchemaVersion = 1;

struct NamedSpec {
  std::string name;
  ParamMap params;
};

struct StabilitySettings {
  std::vector<double> epsilons{0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625};
  std::size_t mollifier_nodes = 24;
  double threshold = 1e-3;
  double slack = 0.1;
  /// "solution", "operator" or "both".
  std::string mode = "both";
};

struct VerifySettings {
  /// Threshold of the change-of-variables benchmark residual.
  double cov_tol = 1e-4;
  /// Label points per axis of the change-of-variables benchmark grid.
  std::size_t cov_resolution = 65;
  /// Relative tolerance of the fragmentation mass law.
  double mass_tol = 1e-4;
  /// Tolerance of the separable-kernel oracle comparison.
  double oracle_tol = 1e-6;
};

/// A parsed and validated run configuration (JSON, "schema": 1).
struct RunConfig {
  std::string subcommand;
  NamedSpec field{"zero", {}};
  NamedSpec kernel{"zero", {}};
  NamedSpec initial{"gaussian", {}};
  GridSpec grid;
  SolverConfig solver;
  StabilitySettings stability;
  CounterexampleSettings counterexample;
  VerifySettings verify;
  std::string output = "out";
  nlohmann::json source;  ///< canonical document used for hashing

  /// 16 hex digits of the FNV-1a hash of the canonical document.
  std::string hash() const;
};

std::vector<std::string> subcommands();
std::vector<std::string> initial_catalogue();

/// Parses a configuration document; every problem is reported as ConfigError.
/// When `subcommand` is nonempty it overrides (or supplies) the document's.
RunConfig parse_config(const nlohmann::json& doc, const std::string& subcommand = "");
RunConfig load_config(const std::string& path, const std::string& subcommand = "");

/// Defaults used when a section is missing, per subcommand.
nlohmann::json default_config(const std::string& subcommand);

/// Initial datum from the catalogue: "gaussian" (amplitude, x_center, x_width,
/// r_center, r_width; product over axes) or "constant" (value, optional r_max cutoff).
Sampler make_initial(const NamedSpec& spec, std::size_t n, std::size_t j);

}  // namespace rlflow

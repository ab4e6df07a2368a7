#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlflow/fields.hpp"
#include "rlflow/grid.hpp"
#include "rlflow/transport.hpp"

namespace rlflow {

struct ReportRow {
  double index = 0.0;  ///< k or epsilon
  std::string metric;
  double value = 0.0;
};

struct Verdict {
  std::string criterion;
  bool passed = false;
  std::string detail;
};

struct ExperimentReport {
  std::string name;
  nlohmann::json parameters = nlohmann::json::object();
  std::vector<ReportRow> rows;
  std::vector<Verdict> verdicts;
  double runtime_seconds = 0.0;

  bool passed() const;
  /// Rows with the given metric, in insertion order.
  std::vector<double> series(const std::string& metric) const;
  /// Everything except the runtime, which is the only non-deterministic field.
  nlohmann::json to_json(bool with_runtime = true) const;
  /// Writes <stem>.json and <stem>_rows.csv into `dir`.
  void write(const std::string& dir, const std::string& stem) const;
};

/// The last three values are nonincreasing up to a relative slack. Values at or
/// below `floor` count as zero, so roundoff-level noise never fails the test.
bool tail_monotone(const std::vector<double>& values, double slack = 0.1, std::size_t count = 3,
                   double floor = 1e-12);

/// Mollifications of `field` at each epsilon, in order.
std::vector<StructuredVectorField> mollified_sequence(const StructuredVectorField& field,
                                                      const std::vector<double>& epsilons,
                                                      std::size_t nodes = 24);

struct SequenceSettings {
  /// One value per sequence member, reported as the row index.
  std::vector<double> indices;
  double threshold = 1e-3;
  double slack = 0.1;
};

/// ||A_k w - A w|| in the sup-in-time windowed L^p norm on [0, T] (the grid's
/// time nodes) for the fixed probe w(t) = probe.
ExperimentReport operator_convergence_experiment(const StructuredVectorField& field,
                                                 const std::vector<StructuredVectorField>& sequence,
                                                 const Kernel& kernel, const Sampler& probe, const GridSpec& grid,
                                                 const SolverConfig& config, const SequenceSettings& settings);

/// sup over time nodes of the windowed L^p distance between the Eulerian
/// slices of u_k (coefficient sequence[k]) and u (coefficient field), all with
/// the same u0. Sequence members run concurrently, one worker each.
ExperimentReport stability_experiment(const StructuredVectorField& field,
                                      const std::vector<StructuredVectorField>& sequence, const Kernel& kernel,
                                      const Sampler& u0, const GridSpec& grid, const SolverConfig& config,
                                      const SequenceSettings& settings);

struct CounterexampleSettings {
  std::vector<double> k_list{2, 4, 8, 16};
  std::vector<double> t_list{0.5, 1.0, 2.0};
  /// Eulerian nodes per period 2 pi / k.
  std::size_t resolution = 256;
  double tol = 1e-12;
  /// Jacobian probes per period.
  std::size_t probes = 16;
  std::size_t workers = 1;
};

/// Weak-but-not-strong convergence of the densities of b_k = sin(kx)/k.
ExperimentReport counterexample_experiment(const CounterexampleSettings& settings);

}  // namespace rlflow

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rlflow/fields.hpp"
#include "rlflow/grid.hpp"

namespace rlflow {

/// Trajectory of one label with its log-Jacobians.
///
/// logJ1 integrates div_x b1 along the x-block of the path and logJ the full
/// divergence, so along the path rho1 = exp(-logJ1) and rho = exp(-logJ).
/// Backward samples (decreasing times) carry the log-Jacobian of the inverse
/// map, i.e. rho(t, label) = exp(logJ) at the final node.
struct FlowSample {
  std::vector<double> label;
  std::vector<double> times;
  std::size_t dim = 0;
  std::vector<double> positions;  ///< times.size() x dim, row-major
  std::vector<double> logJ1;
  std::vector<double> logJ;

  std::span<const double> position(std::size_t node) const {
    return std::span<const double>(positions).subspan(node * dim, dim);
  }
  /// Index of the node at time t (exact up to 1e-12 relative); throws DomainError.
  std::size_t node_of(double t) const;
};

enum class Direction { forward, backward };

struct FlowMap {
  GridSpec grid;
  std::vector<double> times;
  Direction direction = Direction::forward;
  std::vector<FlowSample> samples;  ///< grid node order
};

struct IntegratorStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Adaptive Dormand-Prince 5(4) integration of one label through the listed
/// times (strictly monotone, either direction). Steps end exactly on each
/// requested time.
FlowSample integrate_flow(const StructuredVectorField& field, std::span<const double> label,
                          std::span<const double> times, double tol);
FlowSample integrate_flow(const StructuredVectorField& field, std::span<const double> label, double t0,
                          double t1, double tol);

/// Integrates all labels sharing the x-coordinate `x` as one coupled system.
/// The x-block of the path is a single shared component, so X1 and logJ1 are
/// bit-identical across the returned samples.
std::vector<FlowSample> integrate_fiber(const StructuredVectorField& field, std::span<const double> x,
                                        std::span<const double> r_labels, std::span<const double> times,
                                        double tol, IntegratorStats* stats = nullptr);

/// Flow of every grid node through `times` (grid.time_nodes when empty).
/// Fibers are distributed over `workers` threads; output order is fixed.
FlowMap flow_map(const StructuredVectorField& field, const GridSpec& grid, std::span<const double> times,
                 double tol, std::size_t workers = 1);
/// Forward map over the grid's time nodes, or backward from the last node to 0.
FlowMap flow_map(const StructuredVectorField& field, const GridSpec& grid, Direction direction, double tol,
                 std::size_t workers = 1);

/// Position at an arbitrary time inside the sample's range by cubic Hermite
/// interpolation between stored nodes (velocities re-evaluated from the field).
std::vector<double> interpolate_position(const StructuredVectorField& field, const FlowSample& sample,
                                         double t);

/// rho2(t, label) = rho1(t, X1) / rho(t, X) = exp(logJ - logJ1).
double density_rho2(const FlowSample& sample, double t);
double density_rho2_at(const FlowSample& sample, std::size_t node);

struct BoundViolation {
  std::size_t sample = 0;
  double t = 0.0;
  double margin = 0.0;  ///< amount by which |logJ| exceeds the bound (log scale)
  std::string which;
};

struct CompressibilityReport {
  double incompressibility_constant = 1.0;  ///< sampled max of exp(-logJ)
  std::vector<double> times;
  std::vector<double> divergence_integral;    ///< int_0^t sampled sup |div b|
  std::vector<double> divergence_x_integral;  ///< int_0^t sampled sup |div_x b1|
  std::vector<BoundViolation> bound_violations;
};

/// Checks exp(-D(t)) <= exp(logJ) <= exp(D(t)) (and the same for logJ1 with
/// the x-divergence) for every sample, where D integrates the sampled sup of
/// |div b| over grid nodes and trajectory positions. `slack` is relative.
CompressibilityReport check_compressibility(const FlowMap& map, const StructuredVectorField& field,
                                            double slack = 1e-6);

/// Measure of probe-grid labels outside the ball B_R whose position at t lies in B_rho.
double inflow_measure(const StructuredVectorField& field, double R, double rho, double t,
                      const GridSpec& probe_grid, double tol = 1e-10);

struct TestFunction {
  std::function<double(std::span<const double> point)> value;
  /// Box outside which the function is negligible, one interval per axis.
  std::vector<Interval> support;
};

/// Gaussian exp(-|p - centre|^2 / (2 width^2)), support box of 9 widths.
TestFunction gaussian_test_function(std::vector<double> centre, double width);

struct ChangeOfVariablesResidual {
  double first = 0.0;   ///< |int phi rho1 - int phi(X1, r)|
  double second = 0.0;  ///< |int phi rho - int phi(X)|
};

/// Both change-of-variables identities at time t on `grid`: the Eulerian side
/// takes densities from backward trajectories, the Lagrangian side composes
/// phi with forward trajectories. Throws DomainError when the support of phi,
/// enlarged by the largest displacement, leaves the grid.
ChangeOfVariablesResidual verify_change_of_variables(const StructuredVectorField& field,
                                                     const TestFunction& phi, double t, const GridSpec& grid,
                                                     double tol = 1e-10, std::size_t workers = 1);

/// Writes one CSV row per (label, node): label coords, t, position coords, logJ1, logJ.
void write_flow_csv(const FlowMap& map, const std::string& path);

}  // namespace rlflow

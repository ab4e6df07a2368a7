#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rlflow/fields.hpp"
#include "rlflow/flow.hpp"
#include "rlflow/grid.hpp"

namespace rlflow {

/// Initial datum u0(x, r), sampled at label nodes.
using Sampler = std::function<double(std::span<const double> point)>;

std::vector<double> sample_on_grid(const GridSpec& grid, const Sampler& u0);

struct SolverConfig {
  double p = 2.0;
  double picard_tol = 1e-8;
  std::size_t max_iter = 200;
  /// Contraction budget per slab.
  double slab_target = 0.5;
  double integrator_tol = 1e-10;
  Window window;
  /// Value of u0 outside the label grid.
  double exterior_value = 0.0;
  /// Largest tolerated fraction of Eulerian nodes whose backward label leaves the grid.
  double max_exit_fraction = 1e-3;
  std::size_t workers = 1;

  void validate() const;
  NormSpec norm() const { return NormSpec{p, window}; }
};

/// u~(t, x, r) = u(t, X(t, x, r)) on one slab, stored per (time node, label).
struct LagrangianState {
  GridSpec grid;              ///< label grid; grid.time_nodes are the run's global nodes
  std::vector<double> times;  ///< slab nodes, times.front() is the slab start
  std::vector<double> values;  ///< times.size() x node_count
  FlowMap flow;               ///< forward flow from times.front() over `times`

  std::size_t node_count() const { return grid.node_count(); }
  std::span<const double> at(std::size_t k) const {
    return std::span<const double>(values).subspan(k * node_count(), node_count());
  }
  std::span<double> at(std::size_t k) { return std::span<double>(values).subspan(k * node_count(), node_count()); }
};

/// Discretised operator A on one slab: kernel values, rho2 and r~-weights are
/// gathered once, so each application is a sequence of fiber mat-vecs plus a
/// cumulative trapezoid rule in time.
class OperatorA {
 public:
  OperatorA(const FlowMap& flow, const Kernel& kernel, std::size_t workers = 1);

  /// u0 + int_{t0}^{t} int gamma rho2 v dr~ ds at every slab node.
  std::vector<double> apply(std::span<const double> u0, std::span<const double> v) const;
  /// The integral term alone (A(v) - u0); linear in v.
  std::vector<double> integral(std::span<const double> v) const;
  /// Largest rho2 over the slab's trajectories.
  double rho2_max() const { return rho2_max_; }

 private:
  std::size_t nt_ = 0, nx_ = 0, nr_ = 0;
  std::vector<double> times_;
  std::vector<std::size_t> first_;   ///< per r-row
  std::vector<std::size_t> offset_;  ///< per r-row into a fiber block
  std::size_t block_ = 0;            ///< entries per (time, x) block
  std::vector<double> entries_;      ///< nt x nx x block
  bool zero_ = false;
  double rho2_max_ = 1.0;
  std::size_t workers_ = 1;
};

LagrangianState apply_A(const LagrangianState& state, const Kernel& kernel, std::size_t workers = 1);

/// sup over slab nodes of the windowed L^p norm of u~ - A(u~).
double fixed_point_residual(const LagrangianState& state, const Kernel& kernel, const SolverConfig& config);

struct SlabReport {
  std::size_t index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  double bound = 0.0;     ///< kernel_slab_bound * rho2_max on the slab
  double rho2_max = 1.0;
  std::size_t iterations = 0;
  std::vector<double> differences;  ///< sup-in-time norm of successive iterate differences
  std::vector<double> ratios;       ///< differences[i] / differences[i-1]
  double residual = 0.0;
  std::size_t exits = 0;  ///< Eulerian nodes at the slab end whose label left the grid
};

/// Slab length from t_start: the largest remaining/2^m whose end, snapped down
/// to a time node, keeps kernel_slab_bound * rho2_max <= slab_target.
double choose_slab(const Kernel& kernel, const StructuredVectorField& field, const GridSpec& grid,
                   const SolverConfig& config, double t_start);

/// Picard iteration from u~ = u0 on the slab [t_start, t_end] (both time nodes).
LagrangianState picard_solve(const Sampler& u0, const StructuredVectorField& field, const Kernel& kernel,
                             const GridSpec& grid, const SolverConfig& config, double t_start, double t_end,
                             SlabReport* report = nullptr);
/// Same with u0 given as nodal values on the label grid.
LagrangianState picard_solve(std::span<const double> u0, const StructuredVectorField& field, const Kernel& kernel,
                             const GridSpec& grid, const SolverConfig& config, double t_start, double t_end,
                             SlabReport* report = nullptr);

struct EulerianSlice {
  double t = 0.0;
  GridSpec grid;
  std::vector<double> values;
  std::size_t exits = 0;
};

/// u(t, y) = u~(t, X^{-1}(t, y)) on the label grid, by backward integration to
/// the slab start and multilinear interpolation in the labels.
EulerianSlice eulerian_reconstruct(const LagrangianState& state, const StructuredVectorField& field, double t,
                                   const SolverConfig& config);

struct Solution {
  std::vector<LagrangianState> slabs;
  std::vector<SlabReport> reports;
  EulerianSlice final_slice;

  double residual() const;
  std::size_t iterations() const;
};

/// Slab-by-slab solution on [0, T], re-gridding through an Eulerian slice at
/// every slab end.
Solution continue_solution(const Sampler& u0, const StructuredVectorField& field, const Kernel& kernel,
                           const GridSpec& grid, const SolverConfig& config);

/// Eulerian slices at every global time node (slab starts use the slice that
/// seeded the slab).
std::vector<EulerianSlice> eulerian_history(const Solution& solution, const StructuredVectorField& field,
                                            const SolverConfig& config);

/// Total integral of the slab state at node k over the label grid.
double total_mass(const LagrangianState& state, std::size_t k);

void write_state_csv(const LagrangianState& state, const std::string& path);
void write_slices_csv(const std::vector<EulerianSlice>& slices, const std::string& path);

}  // namespace rlflow

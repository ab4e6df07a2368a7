#include "rlflow/transport.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "rlflow/errors.hpp"
#include "rlflow/io.hpp"
#include "rlflow/parallel.hpp"

namespace rlflow {

namespace {

bool same_time(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

// Global nodes in [t_start, t_end]; both ends must be nodes.
std::vector<double> slab_times(const GridSpec& grid, double t_start, double t_end) {
  std::vector<double> out;
  for (double t : grid.time_nodes)
    if (t >= t_start - 1e-12 && t <= t_end + 1e-12) out.push_back(t);
  if (out.size() < 2 || !same_time(out.front(), t_start) || !same_time(out.back(), t_end))
    throw DomainError("slab ends must be distinct time nodes of the grid");
  out.front() = t_start;
  out.back() = t_end;
  return out;
}

// Flow restricted to its first `count` nodes.
FlowMap truncate_flow(const FlowMap& flow, std::size_t count) {
  FlowMap out;
  out.grid = flow.grid;
  out.direction = flow.direction;
  out.times.assign(flow.times.begin(), flow.times.begin() + static_cast<std::ptrdiff_t>(count));
  out.samples.reserve(flow.samples.size());
  for (const auto& s : flow.samples) {
    FlowSample t;
    t.label = s.label;
    t.dim = s.dim;
    t.times = out.times;
    t.positions.assign(s.positions.begin(), s.positions.begin() + static_cast<std::ptrdiff_t>(count * s.dim));
    t.logJ1.assign(s.logJ1.begin(), s.logJ1.begin() + static_cast<std::ptrdiff_t>(count));
    t.logJ.assign(s.logJ.begin(), s.logJ.begin() + static_cast<std::ptrdiff_t>(count));
    out.samples.push_back(std::move(t));
  }
  return out;
}

double rho2_max_upto(const FlowMap& flow, std::size_t count) {
  double m = 0.0;
  for (const auto& s : flow.samples)
    for (std::size_t k = 0; k < count; ++k) m = std::max(m, density_rho2_at(s, k));
  return m;
}

double sup_distance(const LpNorm& norm, std::span<const double> a, std::span<const double> b, std::size_t nt,
                    std::size_t nodes) {
  double worst = 0.0;
  for (std::size_t k = 0; k < nt; ++k)
    worst = std::max(worst, norm.distance(a.subspan(k * nodes, nodes), b.subspan(k * nodes, nodes)));
  return worst;
}

struct SlabChoice {
  double t_end;
  std::size_t count;  // slab nodes
  double bound;
  double rho2;
};

SlabChoice choose_slab_on(const Kernel& kernel, const GridSpec& grid, const SolverConfig& cfg, const FlowMap& flow) {
  const auto& times = flow.times;
  const double t_start = times.front(), remaining = times.back() - t_start;
  auto evaluate = [&](std::size_t count) {
    const double rho2 = rho2_max_upto(flow, count);
    const double b = kernel_slab_bound(kernel, grid, cfg.p, t_start, times[count - 1]);
    return std::pair{b * rho2, rho2};
  };
  if (kernel.identically_zero) return {times.back(), times.size(), 0.0, rho2_max_upto(flow, times.size())};
  for (int m = 0; m < 60; ++m) {
    const double target = t_start + remaining / std::ldexp(1.0, m);
    std::size_t count = 1;
    while (count < times.size() && times[count] <= target + 1e-12 * std::max(1.0, std::abs(target))) ++count;
    if (count < 2) break;
    const auto [b, rho2] = evaluate(count);
    if (!std::isfinite(b)) throw ConfigError("kernel slab bound is infinite on the grid (check r_min)");
    if (b <= cfg.slab_target) return {times[count - 1], count, b, rho2};
  }
  std::ostringstream os;
  os << "a single time step from t=" << t_start << " already has slab bound " << evaluate(2).first << " > "
     << cfg.slab_target << "; refine the time nodes";
  throw ConfigError(os.str());
}

}  // namespace

std::vector<double> sample_on_grid(const GridSpec& grid, const Sampler& u0) {
  std::vector<double> out(grid.node_count());
  std::array<double, kMaxDim> p{};
  for (std::size_t i = 0; i < out.size(); ++i) {
    grid.point(i, std::span<double>(p.data(), grid.dim()));
    out[i] = u0(std::span<const double>(p.data(), grid.dim()));
    if (!std::isfinite(out[i])) throw DomainError("initial datum is not finite at node " + std::to_string(i));
  }
  return out;
}

void SolverConfig::validate() const {
  if (!(p >= 1.0) || !std::isfinite(p)) throw ConfigError("solver p must lie in [1, inf)");
  if (!(picard_tol > 0.0)) throw ConfigError("picard_tol must be positive");
  if (max_iter == 0) throw ConfigError("max_iter must be positive");
  if (!(slab_target > 0.0 && slab_target < 1.0)) throw ConfigError("slab_target must lie in (0, 1)");
  if (!(integrator_tol > 0.0)) throw ConfigError("integrator tolerance must be positive");
  if (!(max_exit_fraction >= 0.0 && max_exit_fraction <= 1.0))
    throw ConfigError("max_exit_fraction must lie in [0, 1]");
}

// ---------------------------------------------------------------------------

OperatorA::OperatorA(const FlowMap& flow, const Kernel& kernel, std::size_t workers)
    : nt_(flow.times.size()),
      nx_(flow.grid.x_size()),
      nr_(flow.grid.r_size()),
      times_(flow.times),
      zero_(kernel.identically_zero),
      workers_(workers) {
  const GridSpec& grid = flow.grid;
  const std::size_t n = grid.n(), j = grid.j();
  rho2_max_ = rho2_max_upto(flow, nt_);
  if (zero_) return;
  if (j == 0) throw DomainError("a nonzero kernel needs at least one r-axis");

  const FiberQuadrature quad(grid, kernel.support);
  first_.resize(nr_);
  offset_.resize(nr_);
  for (std::size_t i = 0; i < nr_; ++i) {
    first_[i] = quad.first(i);
    offset_[i] = block_;
    block_ += quad.weights(i).size();
  }
  entries_.assign(nt_ * nx_ * block_, 0.0);

  parallel_for(nx_, workers, [&](std::size_t ix) {
    for (std::size_t k = 0; k < nt_; ++k) {
      const double t = times_[k];
      double* blk = entries_.data() + (k * nx_ + ix) * block_;
      for (std::size_t i = 0; i < nr_; ++i) {
        const auto& si = flow.samples[ix * nr_ + i];
        const auto pos = si.position(k);
        const auto x1 = pos.first(n), r = pos.subspan(n, j);
        const auto w = quad.weights(i);
        for (std::size_t l = 0; l < w.size(); ++l) {
          const auto& sl = flow.samples[ix * nr_ + first_[i] + l];
          const auto rt = sl.position(k).subspan(n, j);
          const double g = quad.triangular() ? kernel.on_support(t, x1, r, rt) : kernel.gamma(t, x1, r, rt);
          if (!std::isfinite(g)) {
            std::ostringstream os;
            os << "kernel '" << kernel.name << "' is not finite at t=" << t << " (x-fiber " << ix << ", row " << i
               << ", column " << first_[i] + l << ")";
            throw NumericalError(os.str());
          }
          blk[offset_[i] + l] = w[l] * g * density_rho2_at(sl, k);
        }
      }
    }
  });
}

std::vector<double> OperatorA::integral(std::span<const double> v) const {
  const std::size_t nodes = nx_ * nr_;
  if (v.size() != nt_ * nodes) throw DomainError("state size does not match the operator");
  std::vector<double> out(nt_ * nodes, 0.0);
  if (zero_) return out;
  parallel_for(nx_, workers_, [&](std::size_t ix) {
    std::vector<double> prev(nr_, 0.0), cur(nr_, 0.0);
    for (std::size_t k = 0; k < nt_; ++k) {
      const double* blk = entries_.data() + (k * nx_ + ix) * block_;
      const double* fiber = v.data() + k * nodes + ix * nr_;
      for (std::size_t i = 0; i < nr_; ++i) {
        const std::size_t len = (i + 1 < nr_ ? offset_[i + 1] : block_) - offset_[i];
        double acc = 0.0;
        for (std::size_t l = 0; l < len; ++l) acc += blk[offset_[i] + l] * fiber[first_[i] + l];
        cur[i] = acc;
      }
      double* o = out.data() + k * nodes + ix * nr_;
      if (k > 0) {
        const double half = 0.5 * (times_[k] - times_[k - 1]);
        const double* po = out.data() + (k - 1) * nodes + ix * nr_;
        for (std::size_t i = 0; i < nr_; ++i) o[i] = po[i] + half * (prev[i] + cur[i]);
      }
      prev.swap(cur);
    }
  });
  return out;
}

std::vector<double> OperatorA::apply(std::span<const double> u0, std::span<const double> v) const {
  const std::size_t nodes = nx_ * nr_;
  if (u0.size() != nodes) throw DomainError("initial datum size does not match the operator");
  auto out = integral(v);
  for (std::size_t k = 0; k < nt_; ++k)
    for (std::size_t i = 0; i < nodes; ++i) out[k * nodes + i] += u0[i];
  return out;
}

LagrangianState apply_A(const LagrangianState& state, const Kernel& kernel, std::size_t workers) {
  const OperatorA op(state.flow, kernel, workers);
  LagrangianState out = state;
  out.values = op.apply(state.at(0), state.values);
  return out;
}

double fixed_point_residual(const LagrangianState& state, const Kernel& kernel, const SolverConfig& config) {
  const OperatorA op(state.flow, kernel, config.workers);
  const auto image = op.apply(state.at(0), state.values);
  const LpNorm norm(state.grid, config.norm());
  return sup_distance(norm, state.values, image, state.times.size(), state.node_count());
}

// ---------------------------------------------------------------------------

double choose_slab(const Kernel& kernel, const StructuredVectorField& field, const GridSpec& grid,
                   const SolverConfig& config, double t_start) {
  config.validate();
  const auto times = slab_times(grid, t_start, grid.horizon());
  const FlowMap flow = kernel.identically_zero ? FlowMap{grid, times, Direction::forward, {}}
                                               : flow_map(field, grid, times, config.integrator_tol, config.workers);
  return choose_slab_on(kernel, grid, config, flow).t_end - t_start;
}

namespace {

LagrangianState solve_on_flow(std::span<const double> u0, const Kernel& kernel, FlowMap flow,
                              const SolverConfig& cfg, SlabReport* report) {
  LagrangianState state;
  state.grid = flow.grid;
  state.times = flow.times;
  state.flow = std::move(flow);
  const std::size_t nt = state.times.size(), nodes = state.node_count();
  if (u0.size() != nodes) throw DomainError("initial datum size does not match the grid");

  const OperatorA op(state.flow, kernel, cfg.workers);
  const LpNorm norm(state.grid, cfg.norm());
  state.values.resize(nt * nodes);
  for (std::size_t k = 0; k < nt; ++k) std::copy(u0.begin(), u0.end(), state.at(k).begin());

  SlabReport local;
  local.t_start = state.times.front();
  local.t_end = state.times.back();
  local.rho2_max = op.rho2_max();
  bool converged = false;
  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    auto next = op.apply(u0, state.values);
    const double diff = sup_distance(norm, next, state.values, nt, nodes);
    if (!std::isfinite(diff)) throw NumericalError("Picard iterate is not finite");
    if (!local.differences.empty())
      local.ratios.push_back(local.differences.back() > 0.0 ? diff / local.differences.back() : 0.0);
    local.differences.push_back(diff);
    state.values.swap(next);
    local.iterations = it;
    if (diff < cfg.picard_tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream os;
    os << "Picard iteration on [" << local.t_start << ", " << local.t_end << "] did not reach " << cfg.picard_tol
       << " in " << cfg.max_iter << " iterations (last difference " << local.differences.back() << ")";
    throw ConvergenceFailure(os.str(), local.ratios);
  }
  local.residual = sup_distance(norm, state.values, op.apply(u0, state.values), nt, nodes);
  if (report) {
    local.index = report->index;
    local.bound = report->bound;
    *report = std::move(local);
  }
  return state;
}

}  // namespace

LagrangianState picard_solve(std::span<const double> u0, const StructuredVectorField& field, const Kernel& kernel,
                             const GridSpec& grid, const SolverConfig& config, double t_start, double t_end,
                             SlabReport* report) {
  config.validate();
  const auto times = slab_times(grid, t_start, t_end);
  auto flow = flow_map(field, grid, times, config.integrator_tol, config.workers);
  if (report) report->bound = kernel_slab_bound(kernel, grid, config.p, t_start, t_end) * rho2_max_upto(flow, times.size());
  return solve_on_flow(u0, kernel, std::move(flow), config, report);
}

LagrangianState picard_solve(const Sampler& u0, const StructuredVectorField& field, const Kernel& kernel,
                             const GridSpec& grid, const SolverConfig& config, double t_start, double t_end,
                             SlabReport* report) {
  const auto values = sample_on_grid(grid, u0);
  return picard_solve(std::span<const double>(values), field, kernel, grid, config, t_start, t_end, report);
}

// ---------------------------------------------------------------------------

EulerianSlice eulerian_reconstruct(const LagrangianState& state, const StructuredVectorField& field, double t,
                                   const SolverConfig& config) {
  std::size_t k = state.times.size();
  for (std::size_t i = 0; i < state.times.size(); ++i)
    if (same_time(state.times[i], t)) k = i;
  if (k == state.times.size()) throw DomainError("reconstruction time is not a node of the slab");

  EulerianSlice slice;
  slice.t = state.times[k];
  slice.grid = state.grid;
  const std::size_t nodes = state.node_count();
  if (k == 0) {
    const auto v = state.at(0);
    slice.values.assign(v.begin(), v.end());
    return slice;
  }
  const std::vector<double> back{state.times[k], state.times.front()};
  FlowMap inverse;
  try {
    inverse = flow_map(field, state.grid, back, config.integrator_tol, config.workers);
  } catch (const IntegrationFailure& e) {
    throw IntegrationFailure(std::string("backward flow for reconstruction at t=") + std::to_string(t) + ": " +
                                 e.what(),
                             e.time(), e.state());
  }
  const auto uk = state.at(k);
  slice.values.resize(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    const auto v = interpolate(state.grid, uk, inverse.samples[i].position(1));
    if (v) {
      slice.values[i] = *v;
    } else {
      slice.values[i] = config.exterior_value;
      ++slice.exits;
    }
  }
  const double fraction = static_cast<double>(slice.exits) / static_cast<double>(nodes);
  if (fraction > config.max_exit_fraction) {
    std::ostringstream os;
    os << "at t=" << t << " the backward labels of " << slice.exits << " of " << nodes
       << " nodes leave the label grid (fraction " << fraction << " > " << config.max_exit_fraction
       << "); enlarge the grid";
    throw NumericalError(os.str());
  }
  return slice;
}

double Solution::residual() const {
  double worst = 0.0;
  for (const auto& r : reports) worst = std::max(worst, r.residual);
  return worst;
}

std::size_t Solution::iterations() const {
  std::size_t total = 0;
  for (const auto& r : reports) total += r.iterations;
  return total;
}

Solution continue_solution(const Sampler& u0, const StructuredVectorField& field, const Kernel& kernel,
                           const GridSpec& grid, const SolverConfig& config) {
  config.validate();
  grid.validate();
  Solution sol;
  std::vector<double> datum = sample_on_grid(grid, u0);
  double t = 0.0;
  const double T = grid.horizon();
  while (!same_time(t, T)) {
    const std::size_t index = sol.slabs.size();
    try {
      const auto times = slab_times(grid, t, T);
      const FlowMap full = flow_map(field, grid, times, config.integrator_tol, config.workers);
      const SlabChoice choice = choose_slab_on(kernel, grid, config, full);
      SlabReport report;
      report.index = index;
      report.bound = choice.bound;
      auto state = solve_on_flow(datum, kernel, truncate_flow(full, choice.count), config, &report);
      report.index = index;
      report.bound = choice.bound;
      EulerianSlice slice = eulerian_reconstruct(state, field, choice.t_end, config);
      report.exits = slice.exits;
      datum = slice.values;
      t = choice.t_end;
      sol.slabs.push_back(std::move(state));
      sol.reports.push_back(std::move(report));
      sol.final_slice = std::move(slice);
    } catch (const ConvergenceFailure& e) {
      throw ConvergenceFailure("slab " + std::to_string(index) + ": " + e.what(), e.ratios());
    } catch (const IntegrationFailure& e) {
      throw IntegrationFailure("slab " + std::to_string(index) + ": " + e.what(), e.time(), e.state());
    }
  }
  return sol;
}

std::vector<EulerianSlice> eulerian_history(const Solution& solution, const StructuredVectorField& field,
                                            const SolverConfig& config) {
  std::vector<EulerianSlice> out;
  for (std::size_t s = 0; s < solution.slabs.size(); ++s) {
    const auto& st = solution.slabs[s];
    for (std::size_t k = (s == 0 ? 0 : 1); k < st.times.size(); ++k)
      out.push_back(eulerian_reconstruct(st, field, st.times[k], config));
  }
  return out;
}

double total_mass(const LagrangianState& state, std::size_t k) {
  const auto w = state.grid.node_weights();
  const auto v = state.at(k);
  double m = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) m += w[i] * v[i];
  return m;
}

void write_state_csv(const LagrangianState& state, const std::string& path) {
  const std::size_t dim = state.grid.dim();
  std::vector<std::string> header{"t"};
  for (auto& s : numbered("x", state.grid.n())) header.push_back(s);
  for (auto& s : numbered("r", state.grid.j())) header.push_back(s);
  header.push_back("u_tilde");
  CsvWriter csv(path, header);
  std::vector<double> row(dim + 2);
  for (std::size_t k = 0; k < state.times.size(); ++k) {
    const auto v = state.at(k);
    for (std::size_t i = 0; i < state.node_count(); ++i) {
      row[0] = state.times[k];
      state.grid.point(i, std::span<double>(row).subspan(1, dim));
      row[dim + 1] = v[i];
      csv.row(row);
    }
  }
}

void write_slices_csv(const std::vector<EulerianSlice>& slices, const std::string& path) {
  if (slices.empty()) throw DomainError("no slices to write");
  const GridSpec& grid = slices.front().grid;
  const std::size_t dim = grid.dim();
  std::vector<std::string> header{"t"};
  for (auto& s : numbered("y", dim)) header.push_back(s);
  header.push_back("u");
  CsvWriter csv(path, header);
  std::vector<double> row(dim + 2);
  for (const auto& sl : slices) {
    for (std::size_t i = 0; i < sl.values.size(); ++i) {
      row[0] = sl.t;
      sl.grid.point(i, std::span<double>(row).subspan(1, dim));
      row[dim + 1] = sl.values[i];
      csv.row(row);
    }
  }
}

}  // namespace rlflow

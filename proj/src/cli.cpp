#include "rlflow/cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <ostream>
#include <sstream>

#include "rlflow/errors.hpp"
#include "rlflow/experiments.hpp"
#include "rlflow/flow.hpp"
#include "rlflow/io.hpp"
#include "rlflow/oracle.hpp"
#include "rlflow/transport.hpp"

namespace rlflow {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

CheckResult check(std::string name, double value, double threshold, std::string detail = {}) {
  return {std::move(name), value <= threshold, value, threshold, std::move(detail)};
}

// Every `stride`-th grid node, at most `limit` of them.
std::vector<std::size_t> sample_nodes(std::size_t count, std::size_t limit) {
  std::vector<std::size_t> out;
  const std::size_t stride = std::max<std::size_t>(1, count / limit);
  for (std::size_t i = 0; i < count && out.size() < limit; i += stride) out.push_back(i);
  return out;
}

double rel(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

// ---- checks on the configured field ----

void field_checks(const RunConfig& cfg, std::vector<CheckResult>& out) {
  const auto field = make_field(cfg.field.name, cfg.field.params);
  const GridSpec& grid = cfg.grid;
  const double T = grid.horizon(), tol = cfg.solver.integrator_tol;
  const std::size_t workers = cfg.solver.workers;

  const std::vector<double> vt{0.0, 0.5 * T, T};
  const auto fv = validate_field(field, grid, vt);
  out.push_back({"divergence_matches_finite_differences", fv.passed, fv.max_mismatch, 1e-6,
                 fv.failures.empty() ? "" : fv.failures.front()});

  const auto fwd = flow_map(field, grid, Direction::forward, tol, workers);
  // X1 must not depend on r.
  bool identical = true;
  const std::size_t nr = grid.r_size(), n = grid.n();
  for (std::size_t ix = 0; ix < grid.x_size() && identical; ++ix)
    for (std::size_t ir = 1; ir < nr && identical; ++ir) {
      const auto& a = fwd.samples[ix * nr], &b = fwd.samples[ix * nr + ir];
      for (std::size_t k = 0; k < a.times.size() && identical; ++k) {
        identical = a.logJ1[k] == b.logJ1[k];
        for (std::size_t d = 0; d < n; ++d) identical = identical && a.position(k)[d] == b.position(k)[d];
      }
    }
  out.push_back({"x_block_independent_of_r", identical, identical ? 0.0 : 1.0, 0.0, "bitwise comparison"});

  // Semigroup and inverse consistency on sampled labels.
  double semigroup = 0.0, inverse = 0.0;
  for (std::size_t node : sample_nodes(grid.node_count(), 24)) {
    const auto& s = fwd.samples[node];
    const auto direct = s.position(s.times.size() - 1);
    const auto half = integrate_flow(field, s.label, 0.0, 0.5 * T, tol);
    const auto rest = integrate_flow(field, half.position(1), 0.5 * T, T, tol);
    const auto back = integrate_flow(field, direct, T, 0.0, tol);
    for (std::size_t d = 0; d < s.dim; ++d) {
      semigroup = std::max(semigroup, rel(rest.position(1)[d], direct[d]));
      inverse = std::max(inverse, rel(back.position(1)[d], s.label[d]));
    }
  }
  out.push_back(check("semigroup", semigroup, 10.0 * tol * 100.0, "relative to 1 + |X|"));
  out.push_back(check("inverse_consistency", inverse, 10.0 * tol * 100.0, "relative to 1 + |x|"));

  const auto report = check_compressibility(fwd, field);
  out.push_back({"density_bounds", report.bound_violations.empty(), static_cast<double>(report.bound_violations.size()),
                 0.0, "incompressibility constant " + fmt(report.incompressibility_constant)});
}

// ---- fixed benchmarks ----

GridSpec plane_grid(double half_width, std::size_t count, double T) {
  GridSpec g;
  g.x_axes = {Axis{-half_width, half_width, count}};
  g.r_axes = {Axis{-half_width, half_width, count}};
  g.time_nodes = {0.0, T};
  return g;
}

void change_of_variables_check(const RunConfig& cfg, std::vector<CheckResult>& out) {
  // Widths chosen so that both residuals sit just under 1e-4 at 65 points per axis.
  const std::pair<std::string, std::pair<StructuredVectorField, double>> cases[] = {
      {"linear", {linear_field(0.5, -0.3, 1, 1), 0.2}},
      {"oscillatory", {oscillatory_field(4.0, 1, -0.2), 0.3}},
  };
  const auto grid = plane_grid(4.0, cfg.verify.cov_resolution, 0.5);
  for (const auto& [name, spec] : cases) {
    const auto phi = gaussian_test_function({0.2, -0.1}, spec.second);
    const auto res = verify_change_of_variables(spec.first, phi, 0.5, grid, cfg.solver.integrator_tol,
                                                cfg.solver.workers);
    out.push_back(check("change_of_variables_" + name, std::max(res.first, res.second), cfg.verify.cov_tol,
                        std::to_string(cfg.verify.cov_resolution) + " points per axis"));
  }
}

void oracle_check(const RunConfig& cfg, std::vector<CheckResult>& out) {
  SeparableKernel sk;
  sk.a = {[](std::span<const double>) { return 1.0; },
          [](std::span<const double> r) { return std::sin(std::numbers::pi * r[0]); }};
  sk.c = {[](std::span<const double> r) { return r[0]; }, [](std::span<const double> r) { return 1.0 - r[0]; }};
  GridSpec g;
  g.r_axes = {Axis{0.0, 1.0, 101}};
  g.time_nodes = uniform_times(1.0, 257);
  SolverConfig sc = cfg.solver;
  sc.picard_tol = 1e-10;
  sc.window = {};
  auto u0 = [](std::span<const double> p) { return std::exp(-std::pow(p[0] - 0.5, 2) / (2.0 * 0.15 * 0.15)); };
  const auto sol = continue_solution(u0, zero_field(0, 1), to_kernel(sk), g, sc);
  const auto nodal = sample_on_grid(g, u0);
  const auto exact = separable_solve(sk, nodal, g, g.time_nodes);
  const std::size_t nodes = g.node_count();
  const auto& last = sol.final_slice.values;
  double err = 0.0;
  for (std::size_t i = 0; i < nodes; ++i)
    err = std::max(err, std::abs(last[i] - exact.values[(g.time_nodes.size() - 1) * nodes + i]));
  out.push_back(check("separable_oracle_equivalence", err, cfg.verify.oracle_tol, "max nodal error at T = 1"));
}

void mass_check(const RunConfig& cfg, std::vector<CheckResult>& out) {
  GridSpec g;
  g.r_axes = {Axis{1e-9, 1.5, 201, Spacing::logarithmic}};
  g.time_nodes = uniform_times(1.0, 129);
  SolverConfig sc = cfg.solver;
  sc.window = {};
  auto u0 = [](std::span<const double> p) { return std::exp(-std::pow(p[0] - 0.5, 2) / (2.0 * 0.1 * 0.1)); };
  const auto sol = continue_solution(u0, zero_field(0, 1), fragmentation(2.0), g, sc);
  // Fragments drift below the grid; the reference is the number kept above r_min.
  const auto w = g.node_weights();
  const auto nodal = sample_on_grid(g, u0);
  const double r_min = g.r_axes.front().lo, s = 2.0, T = g.horizon();
  double m0 = 0.0, m1 = 0.0, kept = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    m0 += w[i] * nodal[i];
    m1 += w[i] * sol.final_slice.values[i];
    kept += w[i] * nodal[i] * fragmentation_retained_fraction(s * T, std::log(g.r_axes.front().node(i) / r_min));
  }
  const double expected = std::exp(s * T) * kept / m0;
  out.push_back(check("fragmentation_mass_law", std::abs(m1 / m0 / expected - 1.0), cfg.verify.mass_tol,
                      "growth " + fmt(m1 / m0) + " against " + fmt(expected) + " over " +
                          std::to_string(sol.slabs.size()) + " slabs"));
}

// ---- subcommands ----

struct Outcome {
  bool passed = true;
  std::vector<std::pair<std::string, std::function<void(const std::string&)>>> writers;
  json summary;
};

json check_json(const std::vector<CheckResult>& checks) {
  json a = json::array();
  for (const auto& c : checks)
    a.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"threshold", c.threshold},
                 {"detail", c.detail}});
  return a;
}

Outcome run_flow(const RunConfig& cfg) {
  const auto field = make_field(cfg.field.name, cfg.field.params);
  auto fwd = std::make_shared<FlowMap>(flow_map(field, cfg.grid, Direction::forward, cfg.solver.integrator_tol,
                                                cfg.solver.workers));
  const auto rep = check_compressibility(*fwd, field);
  double max_logj = 0.0;
  for (const auto& s : fwd->samples)
    for (double v : s.logJ) max_logj = std::max(max_logj, std::abs(v));
  Outcome o;
  o.passed = rep.bound_violations.empty();
  o.summary = {{"labels", fwd->samples.size()},
               {"incompressibility_constant", rep.incompressibility_constant},
               {"bound_violations", rep.bound_violations.size()},
               {"max_abs_logJ", max_logj}};
  o.writers.push_back({"_flow.csv", [fwd](const std::string& p) { write_flow_csv(*fwd, p); }});
  return o;
}

Outcome run_solve(const RunConfig& cfg) {
  const auto field = make_field(cfg.field.name, cfg.field.params);
  const auto kernel = make_kernel(cfg.kernel.name, cfg.kernel.params);
  const auto u0 = make_initial(cfg.initial, field.n, field.j);
  auto sol = std::make_shared<Solution>(continue_solution(u0, field, kernel, cfg.grid, cfg.solver));
  auto slices = std::make_shared<std::vector<EulerianSlice>>(eulerian_history(*sol, field, cfg.solver));
  Outcome o;
  json slabs = json::array();
  for (const auto& r : sol->reports)
    slabs.push_back({{"index", r.index}, {"t_start", r.t_start}, {"t_end", r.t_end}, {"bound", r.bound},
                     {"rho2_max", r.rho2_max}, {"iterations", r.iterations}, {"differences", r.differences},
                     {"ratios", r.ratios}, {"residual", r.residual}, {"exits", r.exits}});
  const LpNorm norm(cfg.grid, cfg.solver.norm());
  std::vector<double> norms;
  for (const auto& s : *slices) norms.push_back(norm(s.values));
  o.passed = sol->residual() <= 2.0 * cfg.solver.picard_tol;
  o.summary = {{"slabs", slabs},
               {"iterations", sol->iterations()},
               {"residual", sol->residual()},
               {"sup_in_time_norm", sup_in_time(norms)},
               {"slice_norms", norms}};
  o.writers.push_back({"_slices.csv", [slices](const std::string& p) { write_slices_csv(*slices, p); }});
  for (std::size_t s = 0; s < sol->slabs.size(); ++s)
    o.writers.push_back({"_state_slab" + std::to_string(s) + ".csv",
                         [sol, s](const std::string& p) { write_state_csv(sol->slabs[s], p); }});
  return o;
}

Outcome run_stability(const RunConfig& cfg) {
  const auto field = make_field(cfg.field.name, cfg.field.params);
  const auto kernel = make_kernel(cfg.kernel.name, cfg.kernel.params);
  const auto u0 = make_initial(cfg.initial, field.n, field.j);
  const auto seq = mollified_sequence(field, cfg.stability.epsilons, cfg.stability.mollifier_nodes);
  SequenceSettings ss{cfg.stability.epsilons, cfg.stability.threshold, cfg.stability.slack};
  Outcome o;
  o.summary = json::object();
  auto add = [&](const std::string& tag, ExperimentReport rep) {
    o.passed = o.passed && rep.passed();
    o.summary[tag] = rep.to_json();
    auto shared = std::make_shared<ExperimentReport>(std::move(rep));
    o.writers.push_back({"_" + tag + "_rows.csv", [shared](const std::string& p) {
                           CsvWriter csv(p, {"metric", "index", "value"});
                           for (const auto& r : shared->rows) {
                             const double v[2] = {r.index, r.value};
                             csv.row(r.metric, v);
                           }
                         }});
  };
  if (cfg.stability.mode != "solution")
    add("operator", operator_convergence_experiment(field, seq, kernel, u0, cfg.grid, cfg.solver, ss));
  if (cfg.stability.mode != "operator")
    add("solution", stability_experiment(field, seq, kernel, u0, cfg.grid, cfg.solver, ss));
  return o;
}

Outcome run_counterexample(const RunConfig& cfg) {
  auto settings = cfg.counterexample;
  settings.workers = cfg.solver.workers;
  auto rep = std::make_shared<ExperimentReport>(counterexample_experiment(settings));
  Outcome o;
  o.passed = rep->passed();
  o.summary = rep->to_json();
  o.writers.push_back({"_rows.csv", [rep](const std::string& p) {
                         CsvWriter csv(p, {"metric", "index", "value"});
                         for (const auto& r : rep->rows) {
                           const double v[2] = {r.index, r.value};
                           csv.row(r.metric, v);
                         }
                       }});
  return o;
}

Outcome run_verify(const RunConfig& cfg) {
  const auto checks = verify(cfg);
  Outcome o;
  o.passed = std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  o.summary = {{"checks", check_json(checks)}};
  return o;
}

}  // namespace

std::vector<CheckResult> verify(const RunConfig& cfg) {
  std::vector<CheckResult> out;
  field_checks(cfg, out);
  change_of_variables_check(cfg, out);
  oracle_check(cfg, out);
  mass_check(cfg, out);
  return out;
}

int run(const CliOptions& options, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    if (options.config_path.empty()) {
      json doc = default_config(options.subcommand);
      cfg = parse_config(doc, options.subcommand);
    } else {
      cfg = load_config(options.config_path, options.subcommand);
    }
    cfg.solver.workers = std::max<std::size_t>(1, options.workers);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const DomainError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfigError;
  }

  Outcome o;
  try {
    if (cfg.subcommand == "flow") o = run_flow(cfg);
    else if (cfg.subcommand == "solve") o = run_solve(cfg);
    else if (cfg.subcommand == "stability") o = run_stability(cfg);
    else if (cfg.subcommand == "counterexample") o = run_counterexample(cfg);
    else o = run_verify(cfg);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const DomainError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumericalFailure;
  }

  try {
    const std::string dir = options.out_dir.empty() ? cfg.output : options.out_dir;
    std::filesystem::create_directories(dir);
    const std::string stem = (std::filesystem::path(dir) / (cfg.subcommand + "_" + cfg.hash())).string();
    json doc = {{"subcommand", cfg.subcommand}, {"config", cfg.source}, {"passed", o.passed}, {"result", o.summary}};
    write_json(doc, stem + ".json");
    for (const auto& [suffix, write] : o.writers) write(stem + suffix);
    out << cfg.subcommand << ": " << (o.passed ? "PASS" : "FAIL") << " (" << stem << ".json)\n";
    if (cfg.subcommand == "verify")
      for (const auto& c : o.summary["checks"])
        out << "  " << (c["passed"].get<bool>() ? "pass" : "FAIL") << "  " << c["name"].get<std::string>()
            << "  value=" << format_double(c["value"].get<double>())
            << " threshold=" << format_double(c["threshold"].get<double>()) << "\n";
  } catch (const std::exception& e) {
    err << "cannot write results: " << e.what() << "\n";
    return kExitNumericalFailure;
  }
  return o.passed ? kExitOk : kExitVerdictFailed;
}

}  // namespace rlflow

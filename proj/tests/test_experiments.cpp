#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "rlflow/errors.hpp"
#include "rlflow/experiments.hpp"
#include "rlflow/oracle.hpp"

using namespace rlflow;

namespace {

GridSpec xr_grid(std::size_t nx, std::size_t nr, double T, std::size_t nt) {
  GridSpec g;
  g.x_axes = {Axis{-2.0, 2.0, nx}};
  g.r_axes = {Axis{1e-3, 1.5, nr, Spacing::logarithmic}};
  g.time_nodes = uniform_times(T, nt);
  return g;
}

Sampler bump() {
  return [](std::span<const double> p) { return std::exp(-2.0 * p[0] * p[0]) * std::exp(-20.0 * std::pow(p[1] - 0.6, 2)); };
}

SolverConfig windowed() {
  SolverConfig c;
  c.window = Window{{{-1.0, 1.0}}, {}};
  c.max_exit_fraction = 0.3;
  return c;
}

}  // namespace

TEST_CASE("tail_monotone") {
  CHECK(tail_monotone({}));
  CHECK(tail_monotone({1.0}));
  CHECK(tail_monotone({5.0, 1.0, 0.5, 0.25}));
  CHECK(tail_monotone({5.0, 1.0, 1.05, 0.5}));   // within 10%
  CHECK_FALSE(tail_monotone({5.0, 1.0, 1.2, 0.5}));
  CHECK(tail_monotone({0.1, 7.0, 1.0, 0.5}));     // only the last three count
  CHECK(tail_monotone({1e-3, 1e-17, 3e-17}));     // roundoff counts as zero
  CHECK_FALSE(tail_monotone({1e-3, 1e-17, 3e-17}, 0.1, 3, 0.0));
}

TEST_CASE("a constant sequence has zero distance") {
  const auto g = xr_grid(17, 17, 0.25, 5);
  const auto cfg = windowed();
  const auto f = oscillatory_field(2.0, 1, 0.0);
  const std::vector<StructuredVectorField> seq{f, f, f};
  const SequenceSettings s{{1, 2, 3}, 1e-3, 0.1};
  const auto op = operator_convergence_experiment(f, seq, fragmentation(2.0), bump(), g, cfg, s);
  for (double e : op.series("operator_error")) CHECK(e == 0.0);
  CHECK(op.passed());
  const auto st = stability_experiment(f, seq, fragmentation(2.0), bump(), g, cfg, s);
  for (double e : st.series("solution_distance")) CHECK(e <= 2.0 * cfg.picard_tol);
  for (double r : st.series("fixed_point_residual")) CHECK(r <= 2.0 * cfg.picard_tol);
  CHECK(st.passed());
}

TEST_CASE("operator error of mollified oscillatory fields decays at least linearly") {
  // with an x-independent kernel and rho2 = 1 the x-flow drops out of A; the modulation brings it back
  const auto g = xr_grid(33, 17, 0.5, 9);
  const auto cfg = windowed();
  const auto f = oscillatory_field(2.0, 1, 0.0);
  const std::vector<double> eps{0.2, 0.1, 0.05};
  const auto rep = operator_convergence_experiment(f, mollified_sequence(f, eps), fragmentation(2.0, 0.5), bump(), g, cfg,
                                                   SequenceSettings{eps, 1e-2, 0.1});
  const auto e = rep.series("operator_error");
  REQUIRE(e.size() == 3);
  CHECK(e[0] > 0.0);
  CHECK(std::log2(e[0] / e[1]) >= 1.0);
  CHECK(std::log2(e[1] / e[2]) >= 1.0);
  CHECK(rep.passed());
}

TEST_CASE("pure-transport stability against closed forms") {
  // gamma = 0, linear limit field; sequence lambda_k -> lambda
  const auto g = xr_grid(81, 9, 0.5, 5);
  const auto cfg = windowed();
  const auto f = linear_field(0.5, 0.0, 1, 1);
  std::vector<StructuredVectorField> seq;
  std::vector<double> idx;
  for (double d : {0.1, 0.05, 0.025, 0.0125}) {
    seq.push_back(linear_field(0.5 + d, 0.0, 1, 1));
    idx.push_back(d);
  }
  const auto rep = stability_experiment(f, seq, zero_kernel(), bump(), g, cfg, SequenceSettings{idx, 1e-2, 0.1});
  const auto oracle = rep.series("limit_transport_oracle_error");
  REQUIRE(oracle.size() == 1);
  CHECK(oracle[0] < 1e-2);
  const auto d = rep.series("solution_distance");
  for (std::size_t i = 1; i < d.size(); ++i) {
    CHECK(d[i] < d[i - 1]);
    // first order in the perturbation
    CHECK(d[i - 1] / d[i] == doctest::Approx(2.0).epsilon(0.15));
  }
  CHECK(rep.passed());
}

TEST_CASE("counterexample verdicts") {
  CounterexampleSettings s;
  s.k_list = {2, 4, 8};
  s.t_list = {0.0, 1.0};
  s.resolution = 64;
  const auto rep = counterexample_experiment(s);
  CHECK(rep.passed());
  // t = 0: identity flow
  for (double v : rep.series("l1_deviation[t=0]")) CHECK(v == 0.0);
  for (double v : rep.series("full_period_average[t=0]")) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  const auto l1 = rep.series("l1_deviation[t=1]");
  REQUIRE(l1.size() == 3);
  for (double v : l1) CHECK(v == doctest::Approx(density_l1_deviation(1.0)).epsilon(0.01));
  for (double v : rep.series("jacobian_rel_error[t=1]")) CHECK(v < 1e-4);

  SUBCASE("deterministic across runs and worker counts") {
    auto s2 = s;
    s2.workers = 3;
    CHECK(counterexample_experiment(s).to_json(false) == rep.to_json(false));
    CHECK(counterexample_experiment(s2).to_json(false) == rep.to_json(false));
  }
  SUBCASE("bad settings") {
    auto bad = s;
    bad.k_list.clear();
    CHECK_THROWS_AS(counterexample_experiment(bad), DomainError);
  }
}

TEST_CASE("stability report does not depend on the worker count") {
  const auto g = xr_grid(17, 9, 0.25, 5);
  auto cfg = windowed();
  const auto f = dilation_sobolev_field(-0.3, 2.0 / 3.0);
  const std::vector<double> eps{0.5, 0.25};
  const auto seq = mollified_sequence(f, eps);
  const auto a = stability_experiment(f, seq, fragmentation(2.0), bump(), g, cfg, SequenceSettings{eps, 1.0, 0.1});
  cfg.workers = 2;
  const auto b = stability_experiment(f, seq, fragmentation(2.0), bump(), g, cfg, SequenceSettings{eps, 1.0, 0.1});
  CHECK(a.to_json(false) == b.to_json(false));
  CHECK(a.to_json(true).contains("runtime_seconds"));
  CHECK_FALSE(a.to_json(false).contains("runtime_seconds"));
}

TEST_CASE("report files") {
  ExperimentReport r;
  r.name = "demo";
  r.rows = {{1.0, "m", 0.5}, {2.0, "m", 0.25}, {1.0, "n", 3.0}};
  r.verdicts = {{"ok", true, ""}};
  CHECK(r.passed());
  CHECK(r.series("m") == std::vector<double>{0.5, 0.25});
  r.verdicts.push_back({"bad", false, ""});
  CHECK_FALSE(r.passed());
  const auto dir = std::filesystem::temp_directory_path() / "rlflow_report_test";
  std::filesystem::create_directories(dir);
  r.write(dir.string(), "demo");
  CHECK(std::filesystem::exists(dir / "demo.json"));
  CHECK(std::filesystem::exists(dir / "demo_rows.csv"));
  std::filesystem::remove_all(dir);
}

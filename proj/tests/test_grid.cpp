#include "doctest.h"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "rlflow/errors.hpp"
#include "rlflow/grid.hpp"

using namespace rlflow;

namespace {

GridSpec r_grid(double lo, double hi, std::size_t count) {
  GridSpec g;
  g.r_axes = {Axis{lo, hi, count}};
  g.time_nodes = {0.0, 1.0};
  return g;
}

GridSpec plane(std::size_t nx, std::size_t nr) {
  GridSpec g;
  g.x_axes = {Axis{-1.0, 2.0, nx}};
  g.r_axes = {Axis{0.0, 1.5, nr}};
  g.time_nodes = {0.0, 1.0};
  return g;
}

}  // namespace

TEST_CASE("constant field has p=1 norm equal to value times window measure") {
  const auto g = plane(31, 16);
  std::vector<double> v(g.node_count(), 2.5);
  NormSpec spec{1.0, Window{{{0.0, 1.0}}, {{0.3, 1.2}}}};
  CHECK(lp_norm(g, v, spec) == doctest::Approx(2.5 * 1.0 * 0.9).epsilon(1e-12));
  // whole grid
  CHECK(lp_norm(g, v, NormSpec{1.0, {}}) == doctest::Approx(2.5 * 3.0 * 1.5).epsilon(1e-12));
}

TEST_CASE("zero field has zero norm") {
  const auto g = plane(9, 9);
  std::vector<double> v(g.node_count(), 0.0);
  CHECK(lp_norm(g, v, NormSpec{2.0, {}}) == 0.0);
  CHECK(lp_norm(g, v, NormSpec{1.0, {}}) == 0.0);
}

TEST_CASE("L2 norm of v(r) = r on [0,1]") {
  const auto g = r_grid(0.0, 1.0, 201);
  std::vector<double> v = g.r_axes[0].nodes();
  CHECK(lp_norm(g, v, NormSpec{2.0, {}}) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("window outside the grid is rejected") {
  const auto g = plane(9, 9);
  std::vector<double> v(g.node_count(), 1.0);
  CHECK_THROWS_AS(lp_norm(g, v, NormSpec{2.0, Window{{{-3.0, 0.0}}, {}}}), DomainError);
  CHECK_THROWS_AS(lp_norm(g, v, NormSpec{0.5, {}}), DomainError);
}

TEST_CASE("sup_in_time") {
  const std::vector<double> a{1, 3, 2}, z{0, 0, 0};
  CHECK(sup_in_time(a) == 3.0);
  CHECK(sup_in_time(z) == 0.0);
  CHECK_THROWS_AS(sup_in_time(std::vector<double>{}), DomainError);

  // exponential growth: the sup is attained at the end
  const auto g = r_grid(0.0, 1.0, 65);
  std::vector<double> u0(g.node_count());
  for (std::size_t i = 0; i < u0.size(); ++i) u0[i] = std::sin(3.0 * g.r_axes[0].node(i)) + 1.5;
  const NormSpec spec{2.0, {}};
  std::vector<double> series;
  for (double t : {0.0, 0.5, 1.0}) {
    std::vector<double> v(u0);
    for (auto& x : v) x *= std::exp(2.0 * t);
    series.push_back(lp_norm(g, v, spec));
  }
  CHECK(sup_in_time(series) == doctest::Approx(std::exp(2.0) * lp_norm(g, u0, spec)).epsilon(1e-13));
}

TEST_CASE("integrate_r examples") {
  SUBCASE("constant on [0,1] at several resolutions") {
    for (std::size_t n : {2u, 3u, 8u, 33u, 100u}) {
      const auto g = r_grid(0.0, 1.0, n);
      std::vector<double> one(n, 1.0);
      CHECK(integrate_r(g, one) == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
  SUBCASE("2/r on [1/4, 1]") {
    const auto g = r_grid(0.0, 1.0, 401);
    std::vector<double> f(401, 0.0);
    for (std::size_t i = 1; i < 401; ++i) f[i] = 2.0 / g.r_axes[0].node(i);
    CHECK(g.r_axes[0].node(100) == doctest::Approx(0.25));
    CHECK(integrate_r(g, f, 100) == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-8));
  }
  SUBCASE("sin on [0, pi]") {
    const auto g = r_grid(0.0, std::numbers::pi, 129);
    std::vector<double> f(129);
    for (std::size_t i = 0; i < 129; ++i) f[i] = std::sin(g.r_axes[0].node(i));
    CHECK(integrate_r(g, f) == doctest::Approx(2.0).epsilon(1e-8));
  }
  SUBCASE("log axis: 1/r on [1e-3, 1]") {
    GridSpec g;
    g.r_axes = {Axis{1e-3, 1.0, 41, Spacing::logarithmic}};
    g.time_nodes = {0.0, 1.0};
    std::vector<double> f(41);
    for (std::size_t i = 0; i < 41; ++i) f[i] = 1.0 / g.r_axes[0].node(i);
    // constant in the log variable: exact
    CHECK(integrate_r(g, f) == doctest::Approx(std::log(1e3)).epsilon(1e-13));
  }
}

TEST_CASE("weights are positive and sum to the measure") {
  for (std::size_t n : {2u, 3u, 4u, 7u, 10u, 51u}) {
    const Axis a{-0.5, 2.0, n};
    const auto w = a.weights();
    for (double x : w) CHECK(x > 0.0);
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(2.5).epsilon(1e-14));
  }
  const auto g = plane(13, 7);  // window edges on nodes
  NormSpec spec{1.0, Window{{{0.0, 1.0}}, {{0.25, 1.0}}}};
  const auto w = window_weights(g, spec.window);
  double sum = 0.0;
  for (double x : w) {
    CHECK(x >= 0.0);
    sum += x;
  }
  CHECK(sum == doctest::Approx(1.0 * 0.75).epsilon(1e-13));
}

TEST_CASE("Simpson is exact for cubics") {
  const double lo = -0.3, hi = 1.7;
  for (std::size_t n : {3u, 5u, 21u, 101u}) {
    const Axis a{lo, hi, n};
    const auto w = a.weights();
    const auto x = a.nodes();
    auto exact = [&](double p) { return (std::pow(hi, p + 1) - std::pow(lo, p + 1)) / (p + 1); };
    for (int p = 0; p <= 3; ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += w[i] * std::pow(x[i], p);
      CHECK(s == doctest::Approx(exact(p)).epsilon(1e-13));
    }
  }
}

TEST_CASE("norm is absolutely homogeneous and satisfies the triangle inequality") {
  std::mt19937 rng(7);
  std::normal_distribution<double> d;
  const auto g = plane(17, 13);
  for (double p : {1.0, 2.0, 3.5}) {
    const LpNorm norm(g, NormSpec{p, {}});
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> a(g.node_count()), b(g.node_count()), s(g.node_count()), c(g.node_count());
      for (auto& v : a) v = d(rng);
      for (auto& v : b) v = d(rng);
      const double k = d(rng) * 3.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        s[i] = a[i] + b[i];
        c[i] = k * a[i];
      }
      CHECK(norm(c) == doctest::Approx(std::abs(k) * norm(a)).epsilon(1e-13));
      CHECK(norm(s) <= norm(a) + norm(b) + 1e-13);
      std::vector<double> diff(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
      CHECK(norm.distance(a, b) == doctest::Approx(norm(diff)).epsilon(1e-14));
    }
  }
}

TEST_CASE("grid validation") {
  auto g = plane(5, 5);
  CHECK_NOTHROW(g.validate());
  g.time_nodes = {0.1, 1.0};
  CHECK_THROWS_AS(g.validate(), DomainError);
  g.time_nodes = {0.0, 0.5, 0.5};
  CHECK_THROWS_AS(g.validate(), DomainError);
  g = plane(5, 5);
  g.x_axes[0].count = 1;
  CHECK_THROWS_AS(g.validate(), DomainError);
  g = plane(5, 5);
  g.r_axes[0] = Axis{0.0, 1.0, 5, Spacing::logarithmic};
  CHECK_THROWS_AS(g.validate(), DomainError);
}

TEST_CASE("node ordering is x-major with contiguous r-fibers") {
  const auto g = plane(4, 3);
  double p[2];
  g.point(1 * 3 + 2, p);
  CHECK(p[0] == doctest::Approx(0.0));
  CHECK(p[1] == doctest::Approx(1.5));
}

TEST_CASE("multilinear interpolation reproduces affine data and rejects outside points") {
  GridSpec g;
  g.x_axes = {Axis{-1.0, 1.0, 9}};
  g.r_axes = {Axis{0.0, 2.0, 5}};
  g.time_nodes = {0.0, 1.0};
  std::vector<double> v(g.node_count());
  double p[2];
  for (std::size_t i = 0; i < v.size(); ++i) {
    g.point(i, p);
    v[i] = 1.0 + 2.0 * p[0] - 0.5 * p[1];
  }
  const double q[2] = {0.123, 1.77};
  const auto val = interpolate(g, v, q);
  REQUIRE(val.has_value());
  CHECK(*val == doctest::Approx(1.0 + 2.0 * 0.123 - 0.5 * 1.77).epsilon(1e-14));
  const double out[2] = {1.5, 1.0};
  CHECK_FALSE(interpolate(g, v, out).has_value());
}

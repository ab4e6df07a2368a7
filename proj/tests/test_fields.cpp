#include "doctest.h"

#include <cmath>
#include <numbers>
#include <string>

#include "rlflow/errors.hpp"
#include "rlflow/fields.hpp"

using namespace rlflow;

namespace {

// A field catalogue instance with at least one r-axis where the field allows it.
std::vector<StructuredVectorField> catalogue_with_r() {
  return {make_field("zero", {{"n", 1}, {"j", 1}}),
          make_field("linear", {{"lambda", 0.7}, {"mu", -0.4}, {"n", 2}, {"j", 1}}),
          make_field("oscillatory", {{"k", 4}, {"j", 1}, {"mu", -0.2}}),
          make_field("swirl", {{"j", 1}}),
          make_field("shear_smooth", {{"c", 0.3}, {"mu", 0.1}}),
          make_field("shear_sobolev", {}),
          make_field("dilation_sobolev", {})};
}

StructuredVectorField constant_field(double a, double c) {
  StructuredVectorField f;
  f.name = "constant";
  f.n = 1;
  f.j = 1;
  f.b1 = [a](double, std::span<const double>, std::span<double> out) { out[0] = a; };
  f.b2 = [c](double, std::span<const double>, std::span<const double>, std::span<double> out) { out[0] = c; };
  f.div_x_b1 = [](double, std::span<const double>) { return 0.0; };
  f.div_r_b2 = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
  return f;
}

GridSpec line_grid(double lo, double hi, std::size_t nx, std::size_t nr = 0) {
  GridSpec g;
  g.x_axes = {Axis{lo, hi, nx}};
  if (nr) g.r_axes = {Axis{0.5, 2.0, nr}};
  g.time_nodes = {0.0, 1.0};
  return g;
}

}  // namespace

TEST_CASE("eval_field examples") {
  const double p3[3] = {0.3, -1.0, 2.0};
  for (double v : eval_field(zero_field(2, 1), 0.7, p3)) CHECK(v == 0.0);

  const double x[1] = {std::numbers::pi / 4};
  const auto osc = eval_field(oscillatory_field(2.0), 5.0, x);
  REQUIRE(osc.size() == 1);
  CHECK(osc[0] == doctest::Approx(0.5).epsilon(1e-15));

  const double p2[2] = {2.0, 3.0};
  const auto lin = eval_field(linear_field(1.0, -1.0, 1, 1), 0.0, p2);
  CHECK(lin[0] == doctest::Approx(2.0));
  CHECK(lin[1] == doctest::Approx(-3.0));
}

TEST_CASE("eval_divergence examples") {
  const double x0[1] = {0.0};
  const auto d = eval_divergence(oscillatory_field(3.0), 0.0, x0);
  CHECK(d.div_x_b1 == doctest::Approx(1.0));
  CHECK(d.total == doctest::Approx(1.0));

  for (double a : {-0.7, 0.1, 1.3}) {
    const double x[2] = {a, 0.4 - a};
    CHECK(std::abs(eval_divergence(swirl_field(), 0.2, x).total) < 1e-15);
  }

  const double p[2] = {0.3, 1.7};
  const auto dl = eval_divergence(linear_field(0.6, -1.1, 1, 1), 0.0, p);
  CHECK(dl.div_x_b1 == doctest::Approx(0.6));
  CHECK(dl.div_r_b2 == doctest::Approx(-1.1));
  CHECK(dl.total == doctest::Approx(0.6 - 1.1));
}

TEST_CASE("analytic divergences agree with central differences on every catalogue field") {
  const auto g = line_grid(-1.9, 2.3, 23, 5);
  const std::vector<double> times{0.0, 0.5, 1.0};
  for (const auto& f : catalogue_with_r()) {
    if (f.n != 1) continue;
    CAPTURE(f.name);
    const auto v = validate_field(f, g, times);
    CHECK(v.passed);
  }
  GridSpec g2;
  g2.x_axes = {Axis{-1.5, 1.5, 9}, Axis{-1.0, 2.0, 9}};
  g2.r_axes = {Axis{0.5, 2.0, 3}};
  g2.time_nodes = {0.0, 1.0};
  CHECK(validate_field(swirl_field(1), g2, times).passed);
  CHECK(validate_field(linear_field(0.7, -0.4, 2, 1), g2, times).passed);
}

TEST_CASE("finite-difference mismatch decays at second order on smooth fields") {
  const auto g = line_grid(-2.0, 2.0, 41, 5);
  for (const auto& f : {oscillatory_field(3.0, 1, 0.5), oscillatory_field(1.0, 1)}) {
    const double e1 = divergence_fd_error(f, g, 0.0, 4e-2);
    const double e2 = divergence_fd_error(f, g, 0.0, 2e-2);
    CHECK(std::log2(e1 / e2) >= 1.9);
  }
}

TEST_CASE("the x-block never depends on r") {
  for (const auto& f : catalogue_with_r()) {
    CAPTURE(f.name);
    std::vector<double> p(f.dim()), q(f.dim());
    for (double x : {-1.3, 0.0, 0.4, 2.2}) {
      for (std::size_t i = 0; i < f.n; ++i) p[i] = q[i] = x + 0.1 * static_cast<double>(i);
      for (std::size_t i = f.n; i < f.dim(); ++i) {
        p[i] = 0.6;
        q[i] = 1.9;
      }
      const auto a = eval_field(f, 0.3, p), b = eval_field(f, 0.3, q);
      for (std::size_t i = 0; i < f.n; ++i) CHECK(a[i] == b[i]);
      const auto m = mollify_field(f, MollifierSpec{0.2, 8});
      const auto ma = eval_field(m, 0.3, p), mb = eval_field(m, 0.3, q);
      for (std::size_t i = 0; i < f.n; ++i) CHECK(ma[i] == mb[i]);
    }
  }
}

TEST_CASE("mollification examples") {
  SUBCASE("constant field is reproduced") {
    const auto m = mollify_field(constant_field(0.7, -1.2), MollifierSpec{0.3, 16});
    for (double x : {-1.0, 0.0, 0.77}) {
      const double p[2] = {x, 1.1};
      const auto v = eval_field(m, 0.0, p);
      CHECK(v[0] == doctest::Approx(0.7).epsilon(1e-13));
      CHECK(v[1] == doctest::Approx(-1.2).epsilon(1e-13));
    }
  }
  SUBCASE("affine field is reproduced") {
    const auto m = mollify_field(linear_field(1.3, -0.6, 1, 1), MollifierSpec{0.25, 16});
    for (double x : {-1.0, 0.0, 0.77}) {
      const double p[2] = {x, 1.4};
      const auto v = eval_field(m, 0.0, p);
      CHECK(v[0] == doctest::Approx(1.3 * x).epsilon(1e-12).scale(1.0));
      CHECK(v[1] == doctest::Approx(-0.6 * 1.4).epsilon(1e-12));
      const auto d = eval_divergence(m, 0.0, p);
      CHECK(d.total == doctest::Approx(1.3 - 0.6).epsilon(1e-12));
    }
  }
  SUBCASE("Sobolev profile: smooth result converging pointwise") {
    const auto f = sobolev_field(2.0 / 3.0);
    const std::vector<double> xs{-0.8, -0.3, -0.05, 0.0, 0.02, 0.4, 0.9};
    double prev = 1e300;
    for (double eps : {0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625}) {
      const auto m = mollify_field(f, MollifierSpec{eps, 24});
      double worst = 0.0;
      for (double x : xs) {
        const double p[1] = {x};
        worst = std::max(worst, std::abs(eval_field(m, 0.0, p)[0] - eval_field(f, 0.0, p)[0]));
        // smooth: the mollified divergence is finite even at the kink
        CHECK(std::isfinite(eval_divergence(m, 0.0, p).total));
      }
      CHECK(worst < prev);
      prev = worst;
    }
    CHECK(prev < 0.05);
    // divergence of the mollified field matches its own finite differences,
    // up to the stencil quadrature error
    const std::vector<double> t0{0.0};
    CHECK(validate_field(mollify_field(f, MollifierSpec{0.1, 24}), line_grid(-1.0, 1.0, 21), t0, 1e-5, 1e-4).passed);
    CHECK(validate_field(mollify_field(f, MollifierSpec{0.1, 48}), line_grid(-1.0, 1.0, 21), t0, 1e-5, 1e-5).passed);
  }
  SUBCASE("nonpositive epsilon") {
    CHECK_THROWS_AS(mollify_field(zero_field(1, 0), MollifierSpec{0.0, 8}), DomainError);
    CHECK_THROWS_AS(mollify_field(zero_field(1, 0), MollifierSpec{-0.1, 8}), DomainError);
  }
}

TEST_CASE("fragmentation kernel") {
  CHECK(fragmentation_kernel(1.0, 2.0) == 0.5);
  CHECK(fragmentation_kernel(2.0, 1.0) == 0.0);
  CHECK(fragmentation_kernel(1.0, 1.0) == 0.0);
  CHECK_THROWS_AS(fragmentation_kernel(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(fragmentation_kernel(1.0, -2.0), DomainError);
}

TEST_CASE("catalogue lookups") {
  CHECK_THROWS_AS(make_field("nonexistent", {}), ConfigError);
  try {
    make_field("nonexistent", {});
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& name : field_catalogue()) CHECK(msg.find(name) != std::string::npos);
  }
  CHECK_THROWS_AS(make_kernel("nonexistent", {}), ConfigError);
  CHECK_THROWS_AS(make_field("linear", {{"bogus", 1.0}}), ConfigError);
  CHECK_THROWS_AS(make_kernel("fragmentation", {{"modulation", 1.5}}), ConfigError);
}

TEST_CASE("kernel slab bound examples") {
  GridSpec g;
  g.r_axes = {Axis{0.0, 3.0, 61}};
  g.time_nodes = {0.0, 0.25, 0.5, 0.75, 1.0};

  CHECK(kernel_slab_bound(zero_kernel(), g, 2.0, 0.0, 1.0) == 0.0);

  // (int_r int_rt c^2)^{1/2} = c R, integrated over the slab
  CHECK(kernel_slab_bound(constant_kernel(1.5), g, 2.0, 0.0, 0.5) == doctest::Approx(1.5 * 3.0 * 0.5).epsilon(1e-12));
  CHECK(kernel_slab_bound(constant_kernel(1.5), g, 2.0, 0.25, 1.0) ==
        doctest::Approx(1.5 * 3.0 * 0.75).epsilon(1e-12));
  // p = 1: sup over rt, then int over r
  CHECK(kernel_slab_bound(constant_kernel(2.0), g, 1.0, 0.0, 1.0) == doctest::Approx(2.0 * 3.0).epsilon(1e-12));

  SUBCASE("truncated fragmentation kernel against the closed form") {
    // p = 2: int_{a}^{R} int_r^R rt^{-2} drt dr = log(R/a) - (R - a)/R
    const double a = 1e-3, R = 1.5;
    const double exact = std::sqrt(std::log(R / a) - (R - a) / R);
    for (std::size_t n : {101u, 401u}) {
      GridSpec gl;
      gl.r_axes = {Axis{a, R, n, Spacing::logarithmic}};
      gl.time_nodes = {0.0, 1.0};
      const double b = kernel_slab_bound(fragmentation(1.0), gl, 2.0, 0.0, 1.0);
      CHECK(b == doctest::Approx(exact).epsilon(n == 101 ? 1e-3 : 1e-4));
    }
  }
}

TEST_CASE("kernel slab bound is monotone and subadditive") {
  GridSpec g;
  g.x_axes = {Axis{-1.0, 1.0, 9}};
  g.r_axes = {Axis{1e-3, 1.5, 81, Spacing::logarithmic}};
  g.time_nodes = {0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0};
  for (const auto& k : {fragmentation(2.0, 0.5), constant_kernel(0.7)}) {
    for (double p : {1.0, 2.0}) {
      double prev = 0.0;
      for (std::size_t i = 1; i < g.time_nodes.size(); ++i) {
        const double b = kernel_slab_bound(k, g, p, 0.0, g.time_nodes[i]);
        CHECK(b >= prev);
        prev = b;
      }
      const double whole = kernel_slab_bound(k, g, p, 0.0, 1.0);
      const double parts = kernel_slab_bound(k, g, p, 0.0, 0.375) + kernel_slab_bound(k, g, p, 0.375, 1.0);
      CHECK(whole <= parts * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("triangular fiber quadrature integrates each tail exactly for constants") {
  GridSpec g;
  g.r_axes = {Axis{0.0, 2.0, 21}};
  g.time_nodes = {0.0, 1.0};
  const FiberQuadrature q(g, KernelSupport::lower_triangular);
  for (std::size_t row = 0; row < 21; ++row) {
    const auto w = q.weights(row);
    CHECK(q.first(row) == row);
    double s = 0.0;
    for (double x : w) s += x;
    CHECK(s == doctest::Approx(2.0 - 0.1 * static_cast<double>(row)).epsilon(1e-13).scale(1.0));
  }
}

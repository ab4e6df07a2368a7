#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "rlflow/errors.hpp"
#include "rlflow/fields.hpp"
#include "rlflow/flow.hpp"
#include "rlflow/oracle.hpp"

using namespace rlflow;

namespace {

constexpr double pi = std::numbers::pi;

GridSpec unit_r(std::size_t count) {
  GridSpec g;
  g.r_axes = {Axis{0.0, 1.0, count}};
  g.time_nodes = {0.0, 1.0};
  return g;
}

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  std::vector<double> c(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * n + k] * b[k * n + j];
  return c;
}

}  // namespace

TEST_CASE("explicit flow position") {
  for (double k : {1.0, 4.0, 16.0})
    for (double x : {-0.7, 0.1, 0.3, 2.0}) CHECK(explicit_flow_position(k, 0.0, x) == doctest::Approx(x).epsilon(1e-15));
  CHECK(explicit_flow_position(1.0, 1.0, pi / 2) == doctest::Approx(2.0 * std::atan(std::exp(1.0))).epsilon(1e-14));
  CHECK(explicit_flow_position(1.0, 1.0, pi / 2) == doctest::Approx(2.4365658).epsilon(1e-7));
  for (double t : {0.3, 1.0, 5.0}) {
    CHECK(explicit_flow_position(3.0, t, 0.0) == 0.0);
    CHECK(explicit_flow_position(3.0, t, pi / 3) == doctest::Approx(pi / 3).epsilon(1e-15));
  }
  // the tangent relation itself, on other periodic cells too
  for (double k : {1.0, 4.0})
    for (double x : {0.2, 1.1, -0.4, 2.0 * pi + 0.5, -4.0 * pi - 0.9}) {
      const double X = explicit_flow_position(k, 0.7, x / k);
      CHECK(std::tan(k * X / 2) == doctest::Approx(std::exp(0.7) * std::tan(x / 2)).epsilon(1e-12));
      // stays in the cell of x
      CHECK(std::floor((k * X + pi) / (2 * pi)) == std::floor((x + pi) / (2 * pi)));
    }
  // negative time inverts
  for (double x : {0.2, 1.1, -2.9, 7.0})
    CHECK(explicit_flow_position(2.0, -0.8, explicit_flow_position(2.0, 0.8, x)) == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("explicit flow derivative") {
  for (double k : {1.0, 4.0})
    for (double x : {-0.3, 0.0, 0.9}) CHECK(explicit_flow_derivative(k, 0.0, x) == doctest::Approx(1.0).epsilon(1e-15));
  for (double t : {0.5, 1.0, 2.0}) {
    CHECK(explicit_flow_derivative(5.0, t, 0.0) == doctest::Approx(std::exp(t)).epsilon(1e-14));
    CHECK(explicit_flow_derivative(5.0, t, pi / 5) == doctest::Approx(std::exp(-t)).epsilon(1e-12));
  }
}

TEST_CASE("derivative matches central differences of the position") {
  const double h = 1e-5;
  for (double k : {1.0, 4.0, 16.0})
    for (double t : {0.25, 1.0, 2.0})
      for (double z : {-2.5, -1.0, 0.1, 0.8, 2.9}) {
        const double x = z / k;
        const double fd = (explicit_flow_position(k, t, x + h) - explicit_flow_position(k, t, x - h)) / (2 * h);
        CHECK(fd == doctest::Approx(explicit_flow_derivative(k, t, x)).epsilon(1e-6));
      }
}

TEST_CASE("Jacobian profile is 2pi-periodic, even, and bounded by exp(+-t)") {
  // cos^2(z/2) and sin^2(z/2) swap under z -> z + pi, so pi is not a period
  CHECK(jacobian_profile(1.0, 0.0) == doctest::Approx(std::exp(1.0)));
  CHECK(jacobian_profile(1.0, pi) == doctest::Approx(std::exp(-1.0)));
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> d(-10.0, 10.0);
  for (double t : {0.1, 1.0, 3.0})
    for (int i = 0; i < 200; ++i) {
      const double z = d(rng);
      const double F = jacobian_profile(t, z);
      CHECK(jacobian_profile(t, z + 2 * pi) == doctest::Approx(F).epsilon(1e-12));
      CHECK(jacobian_profile(t, -z) == doctest::Approx(F).epsilon(1e-15));
      CHECK(F >= std::exp(-t) * (1 - 1e-14));
      CHECK(F <= std::exp(t) * (1 + 1e-14));
    }
}

TEST_CASE("period average equals one") {
  CHECK(period_average(1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  for (double t : {0.5, 1.0, 2.0, 3.0})
    for (double k : {1.0, 7.0}) CHECK(std::abs(period_average(k, t) - 1.0) <= 1e-8);
  CHECK_THROWS_AS(period_average(0.0, 1.0), DomainError);
}

TEST_CASE("L1 deviation against the antiderivative") {
  // F(t, .) integrates to G(z) = 2 atan(e^t tan(z/2)); F = 1 at zs with sin^2(zs/2) = 1/(e^t + 1),
  // so int_0^{2 pi} |F - 1| = 4 (G(zs) - zs).
  CHECK(density_l1_deviation(0.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  for (double t : {0.25, 1.0, 2.0}) {
    const double zs = 2.0 * std::asin(1.0 / std::sqrt(std::exp(t) + 1.0));
    const double G = 2.0 * std::atan(std::exp(t) * std::tan(zs / 2));
    CHECK(density_l1_deviation(t) == doctest::Approx(4.0 * (G - zs)).epsilon(1e-10));
  }
  CHECK(density_l1_deviation(1.0) > density_l1_deviation(0.5));
}

TEST_CASE("matrix exponential") {
  SUBCASE("nilpotent") {
    const auto e = matrix_exponential(std::vector<double>{0, 1, 0, 0}, 2);
    CHECK(e[0] == doctest::Approx(1.0));
    CHECK(e[1] == doctest::Approx(1.0));
    CHECK(e[2] == doctest::Approx(0.0));
    CHECK(e[3] == doctest::Approx(1.0));
  }
  SUBCASE("rotation") {
    const double th = 2.3;
    const auto e = matrix_exponential(std::vector<double>{0, -th, th, 0}, 2);
    CHECK(e[0] == doctest::Approx(std::cos(th)).epsilon(1e-13));
    CHECK(e[1] == doctest::Approx(-std::sin(th)).epsilon(1e-13));
    CHECK(e[2] == doctest::Approx(std::sin(th)).epsilon(1e-13));
    CHECK(e[3] == doctest::Approx(std::cos(th)).epsilon(1e-13));
  }
  SUBCASE("diagonal") {
    const auto e = matrix_exponential(std::vector<double>{3, 0, 0, 0, -2, 0, 0, 0, 0.5}, 3);
    CHECK(e[0] == doctest::Approx(std::exp(3.0)).epsilon(1e-13));
    CHECK(e[4] == doctest::Approx(std::exp(-2.0)).epsilon(1e-13));
    CHECK(e[8] == doctest::Approx(std::exp(0.5)).epsilon(1e-13));
    CHECK(e[1] == 0.0);
  }
  SUBCASE("exp(M) exp(-M) = I") {
    std::mt19937 rng(5);
    std::normal_distribution<double> d;
    const std::size_t n = 5;
    std::vector<double> m(n * n), neg(n * n);
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = d(rng);
      neg[i] = -m[i];
    }
    const auto p = matmul(matrix_exponential(m, n), matrix_exponential(neg, n), n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(p[i * n + j] == doctest::Approx(i == j ? 1.0 : 0.0).scale(1.0).epsilon(1e-11));
  }
}

TEST_CASE("separable solve") {
  const auto g = unit_r(101);
  const std::vector<double> one(101, 1.0);
  const std::vector<double> times{0.0, 0.25, 0.5, 1.0};
  SUBCASE("vanishing term") {
    SeparableKernel sk;
    sk.a = {[](std::span<const double>) { return 0.0; }};
    sk.c = {[](std::span<const double>) { return 0.0; }};
    std::vector<double> u0(101);
    for (std::size_t i = 0; i < 101; ++i) u0[i] = std::cos(3.0 * g.r_axes[0].node(i));
    const auto s = separable_solve(sk, u0, g, times);
    for (std::size_t k = 0; k < times.size(); ++k)
      for (std::size_t i = 0; i < 101; ++i) CHECK(s.values[k * 101 + i] == u0[i]);
  }
  SUBCASE("single term with alpha = 1, beta = 2") {
    SeparableKernel sk;
    sk.a = {[](std::span<const double>) { return 2.0; }};
    sk.c = {[](std::span<const double>) { return 1.0; }};
    const auto s = separable_solve(sk, one, g, times);
    CHECK(s.alpha[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.B[0] == doctest::Approx(2.0).epsilon(1e-14));
    for (std::size_t k = 0; k < times.size(); ++k) {
      CHECK(s.moments[k] == doctest::Approx((std::exp(2.0 * times[k]) - 1.0) / 2.0).epsilon(1e-12));
      CHECK(s.values[k * 101 + 50] == doctest::Approx(std::exp(2.0 * times[k])).epsilon(1e-12));
    }
  }
  SUBCASE("disjoint terms decouple") {
    // a1 = c1 = (1/2 - r)+, a2 = c2 = 3 (r - 1/2)+, u0 = 1
    SeparableKernel sk;
    auto left = [](std::span<const double> r) { return std::max(0.0, 0.5 - r[0]); };
    auto right = [](std::span<const double> r) { return 3.0 * std::max(0.0, r[0] - 0.5); };
    sk.a = {left, right};
    sk.c = {left, right};
    const auto s = separable_solve(sk, one, g, times);
    CHECK(s.B[1] == 0.0);
    CHECK(s.B[2] == 0.0);
    const double a1 = 1.0 / 8, b1 = 1.0 / 24, a2 = 3.0 / 8, b2 = 3.0 / 8;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double t = times[k];
      CHECK(s.moments[k * 2 + 0] == doctest::Approx(a1 * std::expm1(b1 * t) / b1).epsilon(1e-12));
      CHECK(s.moments[k * 2 + 1] == doctest::Approx(a2 * std::expm1(b2 * t) / b2).epsilon(1e-12));
    }
  }
}

TEST_CASE("pure transport closed forms") {
  auto u0 = [](std::span<const double> p) { return std::exp(-p[0] * p[0]) + 0.1 * p[0]; };
  const double y[1] = {0.8};
  CHECK(pure_transport_solution(zero_field(1, 0), u0, 2.0, y) == u0(y));
  const double x_lin[1] = {0.8 * std::exp(-0.6)};
  CHECK(pure_transport_solution(linear_field(0.3, 0.0, 1, 0), u0, 2.0, y) == doctest::Approx(u0(x_lin)).epsilon(1e-15));
  const double x_osc[1] = {explicit_flow_position(4.0, -1.0, 0.8)};
  CHECK(pure_transport_solution(oscillatory_field(4.0), u0, 1.0, y) == doctest::Approx(u0(x_osc)).epsilon(1e-15));
  CHECK_THROWS_AS(pure_transport_solution(swirl_field(), u0, 1.0, std::vector<double>{0.1, 0.2}), DomainError);
}

TEST_CASE("closed-form inverses agree with backward integration") {
  const std::vector<StructuredVectorField> fields{
      linear_field(0.7, -0.4, 1, 1), oscillatory_field(3.0, 1, 0.2), shear_sobolev_field(0.5, 0.75),
      dilation_sobolev_field(-0.3, 2.0 / 3.0)};
  const std::vector<double> y{0.4, 0.9};
  for (const auto& f : fields) {
    CAPTURE(f.name);
    const auto closed = closed_form_inverse(f, 0.8, y);
    REQUIRE(closed.has_value());
    const auto back = integrate_flow(f, y, 0.8, 0.0, 1e-12);
    const auto end = back.position(back.times.size() - 1);
    CHECK(end[0] == doctest::Approx((*closed)[0]).epsilon(1e-8));
    CHECK(end[1] == doctest::Approx((*closed)[1]).epsilon(1e-8));
  }
  CHECK_FALSE(closed_form_inverse(swirl_field(), 0.5, std::vector<double>{0.1, 0.2}).has_value());
}

TEST_CASE("retained fraction of the fragmentation cloud") {
  for (double a : {0.0, 0.5, 2.0}) CHECK(fragmentation_retained_fraction(a, 0.0) == doctest::Approx(std::exp(-a)).epsilon(1e-14));
  CHECK(fragmentation_retained_fraction(2.0, 60.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(fragmentation_retained_fraction(0.0, 1.0) == 1.0);
  // Monte Carlo over generations: K ~ Poisson(a), log size drop ~ Gamma(K, 1)
  std::mt19937_64 rng(2024);
  for (double L : {0.5, 2.0, 5.0}) {
    const double a = 2.0;
    std::poisson_distribution<int> gen(a);
    std::exponential_distribution<double> drop(1.0);
    const int draws = 200000;
    int kept = 0;
    for (int i = 0; i < draws; ++i) {
      const int K = gen(rng);
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += drop(rng);
      kept += s <= L;
    }
    CHECK(fragmentation_retained_fraction(a, L) == doctest::Approx(static_cast<double>(kept) / draws).epsilon(5e-3).scale(1.0));
  }
  // monotone in L
  double prev = 0.0;
  for (double L = 0.0; L < 10.0; L += 0.5) {
    const double f = fragmentation_retained_fraction(1.5, L);
    CHECK(f >= prev);
    prev = f;
  }
}

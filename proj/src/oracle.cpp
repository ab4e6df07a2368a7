#include "rlflow/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "rlflow/errors.hpp"

namespace rlflow {

namespace {

constexpr double pi = std::numbers::pi;

// 20-point Gauss-Legendre rule on [-1, 1].
struct GL20 {
  std::array<double, 20> x{}, w{};
  GL20() {
    for (std::size_t i = 0; i < 10; ++i) {
      double z = std::cos(pi * (static_cast<double>(i) + 0.75) / 20.5);
      double dp = 1.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int k = 1; k <= 20; ++k) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
        }
        dp = 20.0 * (z * p0 - p1) / (z * z - 1.0);
        const double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      x[i] = -z;
      x[19 - i] = z;
      w[i] = w[19 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }
};

const GL20& gl20() {
  static const GL20 rule;
  return rule;
}

template <class F>
double gauss(F&& f, double a, double b, std::size_t panels) {
  const auto& g = gl20();
  const double h = (b - a) / static_cast<double>(panels);
  double acc = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p), mid = lo + 0.5 * h;
    for (std::size_t q = 0; q < 20; ++q) acc += 0.5 * h * g.w[q] * f(mid + 0.5 * h * g.x[q]);
  }
  return acc;
}

}  // namespace

double jacobian_profile(double t, double z) {
  const double c = std::cos(0.5 * z), s = std::sin(0.5 * z);
  return std::exp(t) / (c * c + std::exp(2.0 * t) * s * s);
}

double explicit_flow_derivative(double k, double t, double x) { return jacobian_profile(t, k * x); }

double explicit_flow_position(double k, double t, double x) {
  if (!(k > 0.0)) throw DomainError("oscillatory flow needs k > 0");
  if (t == 0.0) return x;
  const double y = k * x;
  const double cell = std::round(y / (2.0 * pi));
  const double z = y - 2.0 * pi * cell;  // in [-pi, pi]
  if (z == 0.0 || std::abs(z) >= pi) return x;
  const double Z = 2.0 * std::atan(std::exp(t) * std::tan(0.5 * z));
  return (Z + 2.0 * pi * cell) / k;
}

double period_average(double k, double t, std::size_t panels) {
  if (!(k > 0.0)) throw DomainError("period_average needs k > 0");
  if (t == 0.0) return 1.0;
  // Peak of width ~e^{-t} at z = 0: grade the panels towards it.
  const double split = std::min(pi, 8.0 * std::exp(-std::abs(t)));
  const double inner = gauss([t](double z) { return jacobian_profile(t, z); }, 0.0, split, panels);
  const double outer = split < pi ? gauss([t](double z) { return jacobian_profile(t, z); }, split, pi, panels) : 0.0;
  return (inner + outer) / pi;
}

double density_l1_deviation(double t, std::size_t panels) {
  if (t == 0.0) return 0.0;
  // F = 1 where sin^2(z/2) = 1 / (e^t + 1); F is even and 2 pi periodic.
  const double zs = 2.0 * std::asin(1.0 / std::sqrt(std::exp(t) + 1.0));
  auto dev = [t](double z) { return std::abs(jacobian_profile(t, z) - 1.0); };
  const double half = gauss(dev, 0.0, zs, panels) + gauss(dev, zs, pi, panels);
  return 2.0 * half;
}

// ---------------------------------------------------------------------------

void SeparableKernel::validate() const {
  if (a.empty() || a.size() != c.size()) throw DomainError("separable kernel needs m >= 1 matching (a, c) pairs");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a[i] || !c[i]) throw DomainError("separable kernel term " + std::to_string(i) + " is empty");
}

Kernel to_kernel(const SeparableKernel& sk) {
  sk.validate();
  Kernel k;
  k.name = "separable";
  k.params = {{"terms", static_cast<double>(sk.terms())}};
  k.gamma = [sk](double, std::span<const double>, std::span<const double> r, std::span<const double> rt) {
    double g = 0.0;
    for (std::size_t i = 0; i < sk.terms(); ++i) g += sk.a[i](r) * sk.c[i](rt);
    return g;
  };
  return k;
}

std::vector<double> matrix_exponential(std::span<const double> m, std::size_t size) {
  if (m.size() != size * size) throw DomainError("matrix_exponential needs a square matrix");
  double norm = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < size; ++j) row += std::abs(m[i * size + j]);
    norm = std::max(norm, row);
  }
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const double scale = std::ldexp(1.0, -squarings);

  auto mul = [size](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> c(size * size, 0.0);
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t l = 0; l < size; ++l)
        for (std::size_t j = 0; j < size; ++j) c[i * size + j] += a[i * size + l] * b[l * size + j];
    return c;
  };
  std::vector<double> a(m.begin(), m.end());
  for (auto& v : a) v *= scale;
  std::vector<double> result(size * size, 0.0), term(size * size, 0.0);
  for (std::size_t i = 0; i < size; ++i) result[i * size + i] = term[i * size + i] = 1.0;
  for (int k = 1; k <= 20; ++k) {
    term = mul(term, a);
    for (auto& v : term) v /= k;
    for (std::size_t i = 0; i < result.size(); ++i) result[i] += term[i];
  }
  for (int s = 0; s < squarings; ++s) result = mul(result, result);
  return result;
}

double fragmentation_retained_fraction(double a, double L) {
  if (!(a >= 0.0) || !(L >= 0.0)) throw DomainError("retained fraction needs a >= 0 and L >= 0");
  // term_k = Poisson(k; a), below = P(Poisson(L) <= k - 1)
  double term = std::exp(-a), below = 0.0, pl = std::exp(-L), sum = term;
  for (int k = 1; k < 2000; ++k) {
    below += pl;
    pl *= L / k;
    term *= a / k;
    sum += term * std::max(0.0, 1.0 - below);
    if (k > a && term < 1e-18) break;
  }
  return sum;
}

SeparableSolution separable_solve(const SeparableKernel& kernel, std::span<const double> u0, const GridSpec& grid,
                                  std::span<const double> times) {
  kernel.validate();
  if (grid.j() == 0) throw DomainError("separable_solve needs an r-axis");
  const std::size_t m = kernel.terms(), nx = grid.x_size(), nr = grid.r_size(), j = grid.j();
  if (u0.size() != nx * nr) throw DomainError("initial datum does not match the grid");

  std::vector<double> av(m * nr), cv(m * nr), r(j);
  for (std::size_t ir = 0; ir < nr; ++ir) {
    grid.r_point(ir, r);
    for (std::size_t i = 0; i < m; ++i) {
      av[i * nr + ir] = kernel.a[i](r);
      cv[i * nr + ir] = kernel.c[i](r);
    }
  }
  SeparableSolution sol;
  sol.times.assign(times.begin(), times.end());
  sol.B.resize(m * m);
  std::vector<double> prod(nr);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < m; ++l) {
      for (std::size_t ir = 0; ir < nr; ++ir) prod[ir] = cv[i * nr + ir] * av[l * nr + ir];
      sol.B[i * m + l] = integrate_r(grid, prod);
    }
  sol.alpha.resize(nx * m);
  for (std::size_t ix = 0; ix < nx; ++ix)
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t ir = 0; ir < nr; ++ir) prod[ir] = cv[i * nr + ir] * u0[ix * nr + ir];
      sol.alpha[ix * m + i] = integrate_r(grid, prod);
    }

  // d/dt (m, 1) = [[B, alpha], [0, 0]] (m, 1): the last column of the exponential is m(t).
  const std::size_t s = m + 1;
  const double t0 = times.empty() ? 0.0 : times.front();
  sol.moments.assign(times.size() * nx * m, 0.0);
  sol.values.assign(times.size() * nx * nr, 0.0);
  std::vector<double> aug(s * s);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double dt = times[k] - t0;
    for (std::size_t ix = 0; ix < nx; ++ix) {
      std::fill(aug.begin(), aug.end(), 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < m; ++l) aug[i * s + l] = dt * sol.B[i * m + l];
        aug[i * s + m] = dt * sol.alpha[ix * m + i];
      }
      const auto e = matrix_exponential(aug, s);
      double* mk = sol.moments.data() + (k * nx + ix) * m;
      for (std::size_t i = 0; i < m; ++i) mk[i] = e[i * s + m];
      for (std::size_t ir = 0; ir < nr; ++ir) {
        double v = u0[ix * nr + ir];
        for (std::size_t i = 0; i < m; ++i) v += av[i * nr + ir] * mk[i];
        sol.values[(k * nx + ix) * nr + ir] = v;
      }
    }
  }
  return sol;
}

// ---------------------------------------------------------------------------

namespace {

double get(const ParamMap& p, const char* key, double fallback = 0.0) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

}  // namespace

std::optional<std::vector<double>> closed_form_inverse(const StructuredVectorField& field, double t,
                                                       std::span<const double> y) {
  if (y.size() != field.dim()) throw DomainError("point dimension does not match the field");
  if (field.params.count("epsilon")) return std::nullopt;
  std::vector<double> x(y.begin(), y.end());
  const std::size_t n = field.n;
  const auto& p = field.params;
  if (field.name == "zero") return x;
  if (field.name == "linear") {
    const double lx = std::exp(-get(p, "lambda") * t), lr = std::exp(-get(p, "mu") * t);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= i < n ? lx : lr;
    return x;
  }
  if (field.name == "oscillatory") {
    x[0] = explicit_flow_position(get(p, "k", 1.0), -t, y[0]);
    const double lr = std::exp(-get(p, "mu") * t);
    for (std::size_t i = 1; i < x.size(); ++i) x[i] *= lr;
    return x;
  }
  if (field.name == "shear_sobolev" && get(p, "mu") == 0.0) {
    x[1] = y[1] - t * get(p, "c") * std::pow(std::abs(y[0]), get(p, "alpha"));
    return x;
  }
  if (field.name == "dilation_sobolev") {
    x[1] = y[1] * std::exp(-t * get(p, "c") * std::pow(std::abs(y[0]), get(p, "alpha")));
    return x;
  }
  return std::nullopt;
}

double pure_transport_solution(const StructuredVectorField& field, const Sampler& u0, double t,
                               std::span<const double> y) {
  const auto x = closed_form_inverse(field, t, y);
  if (!x) throw DomainError("field '" + field.name + "' has no closed-form inverse flow");
  return u0(*x);
}

}  // namespace rlflow

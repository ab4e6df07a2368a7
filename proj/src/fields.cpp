#include "rlflow/fields.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "rlflow/errors.hpp"

namespace rlflow {

namespace {

using Point = std::array<double, kMaxDim>;

double param(const ParamMap& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void require_known(const ParamMap& p, std::initializer_list<const char*> keys, const std::string& what) {
  for (const auto& [k, v] : p) {
    bool ok = false;
    for (const char* key : keys) ok = ok || k == key;
    if (!ok) throw ConfigError("unknown parameter '" + k + "' for " + what);
    if (!std::isfinite(v)) throw ConfigError("parameter '" + k + "' for " + what + " is not finite");
  }
}

std::size_t dim_param(const ParamMap& p, const std::string& key, double fallback, std::size_t max) {
  const double v = param(p, key, fallback);
  if (v < 0 || v != std::floor(v) || v > static_cast<double>(max))
    throw ConfigError("parameter '" + key + "' must be an integer in [0, " + std::to_string(max) + "]");
  return static_cast<std::size_t>(v);
}

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(std::size_t m, std::vector<double>& x, std::vector<double>& w) {
  x.assign(m, 0.0);
  w.assign(m, 0.0);
  for (std::size_t i = 0; i < (m + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(m) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (std::size_t k = 1; k <= m; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * static_cast<double>(k) - 1.0) * z * p1 - (static_cast<double>(k) - 1.0) * p2) /
             static_cast<double>(k);
      }
      dp = static_cast<double>(m) * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[m - 1 - i] = z;
    w[i] = w[m - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

double bump(double z) {
  const double s = 1.0 - z * z;
  return s <= 0.0 ? 0.0 : std::exp(-1.0 / s);
}

double bump_derivative(double z) {
  const double s = 1.0 - z * z;
  return s <= 0.0 ? 0.0 : std::exp(-1.0 / s) * (-2.0 * z / (s * s));
}

// One-dimensional mollifier rule: nodes z, mass weights w (sum 1) and
// derivative weights d (normalised so that -sum d z = 1, exact on affine data).
struct Rule1D {
  std::vector<double> z, w, d;
};

Rule1D make_rule(const std::vector<double>& gx, const std::vector<double>& gw, std::vector<double> cuts) {
  cuts.insert(cuts.begin(), -1.0);
  cuts.push_back(1.0);
  Rule1D rule;
  for (std::size_t piece = 0; piece + 1 < cuts.size(); ++piece) {
    const double a = cuts[piece], b = cuts[piece + 1];
    if (!(b > a)) continue;
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t q = 0; q < gx.size(); ++q) {
      const double z = mid + half * gx[q];
      rule.z.push_back(z);
      rule.w.push_back(half * gw[q] * bump(z));
      rule.d.push_back(half * gw[q] * bump_derivative(z));
    }
  }
  const double mass = std::accumulate(rule.w.begin(), rule.w.end(), 0.0);
  double moment = 0.0;
  for (std::size_t q = 0; q < rule.z.size(); ++q) moment -= rule.d[q] * rule.z[q];
  for (auto& v : rule.w) v /= mass;
  for (auto& v : rule.d) v /= moment;
  return rule;
}

struct MollifierStencil {
  StructuredVectorField base;
  double eps;
  std::vector<double> gx, gw;
  Rule1D fixed;

  Rule1D axis0_rule(double x0) const {
    std::vector<double> cuts;
    for (double k : base.kinks) {
      const double zs = (x0 - k) / eps;
      if (zs > -1.0 && zs < 1.0) cuts.push_back(zs);
    }
    if (cuts.empty()) return fixed;
    std::sort(cuts.begin(), cuts.end());
    return make_rule(gx, gw, std::move(cuts));
  }

  // Visits every tensor node: f(shifted point, mass weight, derivative weights per axis).
  // Kink splitting applies to axis 0 only when it is the x0 coordinate.
  template <class F>
  void for_each_node(std::span<const double> centre, std::size_t dims, bool axis0_is_x, F&& f) const {
    if (dims == 0) {
      f(std::span<const double>(), 1.0, std::span<const double>());
      return;
    }
    Rule1D first = axis0_is_x ? axis0_rule(centre[0]) : fixed;
    std::array<const Rule1D*, kMaxDim> rules{};
    for (std::size_t d = 0; d < dims; ++d) rules[d] = d == 0 ? &first : &fixed;
    std::array<std::size_t, kMaxDim> idx{};
    Point y{};
    std::array<double, kMaxDim> dw{};
    while (true) {
      double w = 1.0;
      for (std::size_t d = 0; d < dims; ++d) {
        y[d] = centre[d] - eps * rules[d]->z[idx[d]];
        w *= rules[d]->w[idx[d]];
      }
      for (std::size_t d = 0; d < dims; ++d) {
        double prod = rules[d]->d[idx[d]];
        for (std::size_t e = 0; e < dims; ++e)
          if (e != d) prod *= rules[e]->w[idx[e]];
        dw[d] = prod / eps;
      }
      f(std::span<const double>(y.data(), dims), w, std::span<const double>(dw.data(), dims));
      std::size_t d = dims;
      while (d-- > 0) {
        if (++idx[d] < rules[d]->z.size()) break;
        idx[d] = 0;
      }
      if (d == static_cast<std::size_t>(-1)) break;
    }
  }
};

}  // namespace

// ---------------------------------------------------------------------------

void eval_field(const StructuredVectorField& field, double t, std::span<const double> point,
                std::span<double> out) {
  const std::size_t n = field.n, j = field.j;
  if (point.size() != n + j || out.size() != n + j)
    throw DomainError("point dimension does not match field '" + field.name + "'");
  if (n > 0) field.b1(t, point.first(n), out.first(n));
  if (j > 0) field.b2(t, point.first(n), point.subspan(n, j), out.subspan(n, j));
  for (double v : out)
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "field '" << field.name << "' is not finite at t=" << t << " point=(";
      for (std::size_t i = 0; i < point.size(); ++i) os << (i ? "," : "") << point[i];
      os << ")";
      throw NumericalError(os.str());
    }
}

std::vector<double> eval_field(const StructuredVectorField& field, double t,
                               std::span<const double> point) {
  std::vector<double> out(field.dim());
  eval_field(field, t, point, out);
  return out;
}

Divergence eval_divergence(const StructuredVectorField& field, double t, std::span<const double> point) {
  const std::size_t n = field.n, j = field.j;
  if (point.size() != n + j) throw DomainError("point dimension does not match field '" + field.name + "'");
  Divergence d;
  if (n > 0) d.div_x_b1 = field.div_x_b1(t, point.first(n));
  if (j > 0) d.div_r_b2 = field.div_r_b2(t, point.first(n), point.subspan(n, j));
  d.total = d.div_x_b1 + d.div_r_b2;
  return d;
}

namespace {

// Central-difference divergences (x-block, r-block) at a point.
std::pair<double, double> fd_divergence(const StructuredVectorField& f, double t, std::span<const double> p,
                                        double h) {
  const std::size_t dim = f.dim();
  Point q{};
  Point vp{}, vm{};
  double dx = 0.0, dr = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    std::copy(p.begin(), p.end(), q.begin());
    q[i] = p[i] + h;
    eval_field(f, t, std::span<const double>(q.data(), dim), std::span<double>(vp.data(), dim));
    q[i] = p[i] - h;
    eval_field(f, t, std::span<const double>(q.data(), dim), std::span<double>(vm.data(), dim));
    const double g = (vp[i] - vm[i]) / (2.0 * h);
    (i < f.n ? dx : dr) += g;
  }
  return {dx, dr};
}

}  // namespace

double divergence_fd_error(const StructuredVectorField& field, const GridSpec& grid, double t, double h) {
  Point p{};
  double worst = 0.0;
  for (std::size_t node = 0; node < grid.node_count(); ++node) {
    grid.point(node, std::span<double>(p.data(), grid.dim()));
    const auto pt = std::span<const double>(p.data(), grid.dim());
    const auto d = eval_divergence(field, t, pt);
    const auto [fx, fr] = fd_divergence(field, t, pt, h);
    worst = std::max({worst, std::abs(d.div_x_b1 - fx), std::abs(d.div_r_b2 - fr)});
  }
  return worst;
}

FieldValidation validate_field(const StructuredVectorField& field, const GridSpec& grid,
                               std::span<const double> times, double h, double tol) {
  FieldValidation report;
  if (grid.n() != field.n || grid.j() != field.j) {
    report.passed = false;
    report.failures.push_back("grid dimensions do not match the field");
    return report;
  }
  Point p{};
  for (double t : times) {
    for (std::size_t node = 0; node < grid.node_count(); ++node) {
      grid.point(node, std::span<double>(p.data(), grid.dim()));
      const auto pt = std::span<const double>(p.data(), grid.dim());
      const auto d = eval_divergence(field, t, pt);
      std::ostringstream where;
      where << "t=" << t << " node=" << node;
      if (!std::isfinite(d.total)) {
        report.passed = false;
        report.failures.push_back("unbounded divergence at " + where.str());
        continue;
      }
      report.max_abs_divergence = std::max(report.max_abs_divergence, std::abs(d.total));
      const auto [fx, fr] = fd_divergence(field, t, pt, h);
      const double mismatch = std::max(std::abs(d.div_x_b1 - fx), std::abs(d.div_r_b2 - fr));
      report.max_mismatch = std::max(report.max_mismatch, mismatch);
      if (mismatch > tol * (1.0 + std::abs(d.total))) {
        report.passed = false;
        report.failures.push_back("divergence mismatch " + std::to_string(mismatch) + " at " + where.str());
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

StructuredVectorField zero_field(std::size_t n, std::size_t j) {
  StructuredVectorField f;
  f.name = "zero";
  f.params = {{"n", static_cast<double>(n)}, {"j", static_cast<double>(j)}};
  f.n = n;
  f.j = j;
  f.b1 = [](double, std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  f.b2 = [](double, std::span<const double>, std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  f.div_x_b1 = [](double, std::span<const double>) { return 0.0; };
  f.div_r_b2 = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
  f.growth_split = "Linf";
  f.lipschitz_hint = 0.0;
  f.speed_bound = 0.0;
  f.b2_r_independent = true;
  f.b2_affine_in_r = true;
  return f;
}

StructuredVectorField linear_field(double lambda, double mu, std::size_t n, std::size_t j) {
  StructuredVectorField f;
  f.name = "linear";
  f.params = {{"lambda", lambda}, {"mu", mu}, {"n", static_cast<double>(n)}, {"j", static_cast<double>(j)}};
  f.n = n;
  f.j = j;
  f.b1 = [lambda](double, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = lambda * x[i];
  };
  f.b2 = [mu](double, std::span<const double>, std::span<const double> r, std::span<double> out) {
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = mu * r[i];
  };
  const double dx = lambda * static_cast<double>(n), dr = mu * static_cast<double>(j);
  f.div_x_b1 = [dx](double, std::span<const double>) { return dx; };
  f.div_r_b2 = [dr](double, std::span<const double>, std::span<const double>) { return dr; };
  f.growth_split = "Linf";
  f.lipschitz_hint = std::max(std::abs(lambda), std::abs(mu));
  f.b2_r_independent = mu == 0.0;
  f.b2_affine_in_r = true;
  return f;
}

StructuredVectorField oscillatory_field(double k, std::size_t j, double mu) {
  if (!(k > 0.0)) throw DomainError("oscillatory field needs k > 0");
  StructuredVectorField f;
  f.name = "oscillatory";
  f.params = {{"k", k}, {"j", static_cast<double>(j)}, {"mu", mu}};
  f.n = 1;
  f.j = j;
  f.b1 = [k](double, std::span<const double> x, std::span<double> out) { out[0] = std::sin(k * x[0]) / k; };
  f.b2 = [mu](double, std::span<const double>, std::span<const double> r, std::span<double> out) {
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = mu * r[i];
  };
  const double dr = mu * static_cast<double>(j);
  f.div_x_b1 = [k](double, std::span<const double> x) { return std::cos(k * x[0]); };
  f.div_r_b2 = [dr](double, std::span<const double>, std::span<const double>) { return dr; };
  f.growth_split = "Linf";
  f.lipschitz_hint = std::max(1.0, std::abs(mu));
  if (j == 0) f.speed_bound = 1.0 / k;
  f.b2_r_independent = mu == 0.0;
  f.b2_affine_in_r = true;
  return f;
}

StructuredVectorField swirl_field(std::size_t j) {
  StructuredVectorField f;
  f.name = "swirl";
  f.params = {{"j", static_cast<double>(j)}};
  f.n = 2;
  f.j = j;
  f.b1 = [](double, std::span<const double> x, std::span<double> out) {
    const double psi = std::exp(-(x[0] * x[0] + x[1] * x[1]));
    out[0] = 2.0 * x[1] * psi;
    out[1] = -2.0 * x[0] * psi;
  };
  f.b2 = [](double, std::span<const double>, std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  f.div_x_b1 = [](double, std::span<const double>) { return 0.0; };
  f.div_r_b2 = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
  f.growth_split = "L1";
  f.lipschitz_hint = 2.0;
  f.speed_bound = std::sqrt(2.0) * std::exp(-0.5);
  f.b2_r_independent = true;
  f.b2_affine_in_r = true;
  return f;
}

StructuredVectorField sobolev_field(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("sobolev field needs 0 < alpha < 1");
  StructuredVectorField f;
  f.name = "sobolev";
  f.params = {{"alpha", alpha}};
  f.n = 1;
  f.j = 0;
  f.b1 = [alpha](double, std::span<const double> x, std::span<double> out) {
    out[0] = std::copysign(std::pow(std::abs(x[0]), alpha), x[0]);
  };
  f.b2 = [](double, std::span<const double>, std::span<const double>, std::span<double>) {};
  f.div_x_b1 = [alpha](double, std::span<const double> x) {
    return x[0] == 0.0 ? std::numeric_limits<double>::infinity() : alpha * std::pow(std::abs(x[0]), alpha - 1.0);
  };
  f.div_r_b2 = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
  f.growth_split = "Linf";
  f.kinks = {0.0};
  return f;
}

StructuredVectorField shear_smooth_field(double c, double mu) {
  StructuredVectorField f;
  f.name = "shear_smooth";
  f.params = {{"c", c}, {"mu", mu}};
  f.n = 1;
  f.j = 1;
  f.b1 = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  f.b2 = [c, mu](double, std::span<const double> x, std::span<const double> r, std::span<double> out) {
    out[0] = c * (1.0 + std::sin(x[0])) + mu * r[0];
  };
  f.div_x_b1 = [](double, std::span<const double>) { return 0.0; };
  f.div_r_b2 = [mu](double, std::span<const double>, std::span<const double>) { return mu; };
  f.growth_split = "Linf";
  f.lipschitz_hint = std::abs(c) + std::abs(mu);
  f.b2_r_independent = mu == 0.0;
  f.b2_affine_in_r = true;
  return f;
}

StructuredVectorField shear_sobolev_field(double c, double alpha, double mu) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("shear_sobolev field needs 0 < alpha < 1");
  StructuredVectorField f;
  f.name = "shear_sobolev";
  f.params = {{"c", c}, {"alpha", alpha}, {"mu", mu}};
  f.n = 1;
  f.j = 1;
  f.b1 = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  f.b2 = [c, alpha, mu](double, std::span<const double> x, std::span<const double> r, std::span<double> out) {
    out[0] = c * std::pow(std::abs(x[0]), alpha) + mu * r[0];
  };
  f.div_x_b1 = [](double, std::span<const double>) { return 0.0; };
  f.div_r_b2 = [mu](double, std::span<const double>, std::span<const double>) { return mu; };
  f.growth_split = "Linf";
  f.b2_r_independent = mu == 0.0;
  f.b2_affine_in_r = true;
  f.kinks = {0.0};
  return f;
}

StructuredVectorField dilation_sobolev_field(double c, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("dilation_sobolev field needs 0 < alpha < 1");
  StructuredVectorField f;
  f.name = "dilation_sobolev";
  f.params = {{"c", c}, {"alpha", alpha}};
  f.n = 1;
  f.j = 1;
  f.b1 = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  f.b2 = [c, alpha](double, std::span<const double> x, std::span<const double> r, std::span<double> out) {
    out[0] = c * std::pow(std::abs(x[0]), alpha) * r[0];
  };
  f.div_x_b1 = [](double, std::span<const double>) { return 0.0; };
  f.div_r_b2 = [c, alpha](double, std::span<const double> x, std::span<const double>) {
    return c * std::pow(std::abs(x[0]), alpha);
  };
  f.growth_split = "Linf";
  f.b2_affine_in_r = true;
  f.kinks = {0.0};
  return f;
}

std::vector<std::string> field_catalogue() {
  return {"zero", "linear", "oscillatory", "swirl", "sobolev", "shear_smooth", "shear_sobolev",
          "dilation_sobolev"};
}

StructuredVectorField make_field(const std::string& name, const ParamMap& p) {
  const std::string what = "field '" + name + "'";
  if (name == "zero") {
    require_known(p, {"n", "j"}, what);
    return zero_field(dim_param(p, "n", 1, kMaxDim), dim_param(p, "j", 0, kMaxDim));
  }
  if (name == "linear") {
    require_known(p, {"lambda", "mu", "n", "j"}, what);
    return linear_field(param(p, "lambda", 1.0), param(p, "mu", 0.0), dim_param(p, "n", 1, kMaxDim),
                        dim_param(p, "j", 0, kMaxDim));
  }
  try {
    if (name == "oscillatory") {
      require_known(p, {"k", "j", "mu"}, what);
      return oscillatory_field(param(p, "k", 1.0), dim_param(p, "j", 0, kMaxDim - 1), param(p, "mu", 0.0));
    }
    if (name == "swirl") {
      require_known(p, {"j"}, what);
      return swirl_field(dim_param(p, "j", 0, kMaxDim - 2));
    }
    if (name == "sobolev") {
      require_known(p, {"alpha"}, what);
      return sobolev_field(param(p, "alpha", 2.0 / 3.0));
    }
    if (name == "shear_smooth") {
      require_known(p, {"c", "mu"}, what);
      return shear_smooth_field(param(p, "c", 0.25), param(p, "mu", 0.0));
    }
    if (name == "shear_sobolev") {
      require_known(p, {"c", "alpha", "mu"}, what);
      return shear_sobolev_field(param(p, "c", 0.25), param(p, "alpha", 2.0 / 3.0), param(p, "mu", 0.0));
    }
    if (name == "dilation_sobolev") {
      require_known(p, {"c", "alpha"}, what);
      return dilation_sobolev_field(param(p, "c", -0.5), param(p, "alpha", 2.0 / 3.0));
    }
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  std::string list;
  for (const auto& c : field_catalogue()) list += (list.empty() ? "" : ", ") + c;
  throw ConfigError("unknown field '" + name + "'; available: " + list);
}

// ---------------------------------------------------------------------------

StructuredVectorField mollify_field(const StructuredVectorField& field, const MollifierSpec& spec) {
  if (!(spec.epsilon > 0.0) || !std::isfinite(spec.epsilon)) throw DomainError("mollifier epsilon must be positive");
  if (spec.nodes < 2) throw DomainError("mollifier needs at least two nodes per axis");

  auto st = std::make_shared<MollifierStencil>();
  st->base = field;
  st->eps = spec.epsilon;
  gauss_legendre(spec.nodes, st->gx, st->gw);
  st->fixed = make_rule(st->gx, st->gw, {});
  std::shared_ptr<const MollifierStencil> s = st;

  StructuredVectorField m;
  m.name = field.name;
  m.params = field.params;
  m.params["epsilon"] = spec.epsilon;
  m.n = field.n;
  m.j = field.j;
  m.growth_split = field.growth_split;
  m.speed_bound = field.speed_bound;
  m.autonomous = field.autonomous;
  m.b2_r_independent = field.b2_r_independent;
  m.b2_affine_in_r = field.b2_affine_in_r;
  if (field.lipschitz_hint && field.kinks.empty()) m.lipschitz_hint = field.lipschitz_hint;

  const std::size_t n = field.n, j = field.j;

  m.b1 = [s, n](double t, std::span<const double> x, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    Point v{};
    s->for_each_node(x, n, true, [&](std::span<const double> y, double w, std::span<const double>) {
      s->base.b1(t, y, std::span<double>(v.data(), n));
      for (std::size_t i = 0; i < n; ++i) out[i] += w * v[i];
    });
  };
  m.div_x_b1 = [s, n](double t, std::span<const double> x) {
    double acc = 0.0;
    Point v{};
    s->for_each_node(x, n, true, [&](std::span<const double> y, double, std::span<const double> dw) {
      s->base.b1(t, y, std::span<double>(v.data(), n));
      for (std::size_t i = 0; i < n; ++i) acc += dw[i] * v[i];
    });
    return acc;
  };

  const bool r_free = field.b2_r_independent;
  const bool x_only = r_free || field.b2_affine_in_r;
  const std::size_t dims2 = x_only ? n : n + j;
  m.b2 = [s, n, j, dims2](double t, std::span<const double> x, std::span<const double> r, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    Point centre{};
    std::copy(x.begin(), x.end(), centre.begin());
    std::copy(r.begin(), r.end(), centre.begin() + static_cast<std::ptrdiff_t>(n));
    Point v{};
    s->for_each_node(std::span<const double>(centre.data(), n + j), dims2, n > 0,
                     [&](std::span<const double> y, double w, std::span<const double>) {
                       const auto rr = dims2 > n ? y.subspan(n, j) : r;
                       s->base.b2(t, y.first(n), rr, std::span<double>(v.data(), j));
                       for (std::size_t i = 0; i < j; ++i) out[i] += w * v[i];
                     });
  };
  if (r_free) {
    m.div_r_b2 = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
  } else if (x_only) {
    m.div_r_b2 = [s, n](double t, std::span<const double> x, std::span<const double> r) {
      double acc = 0.0;
      s->for_each_node(x, n, true, [&](std::span<const double> y, double w, std::span<const double>) {
        acc += w * s->base.div_r_b2(t, y, r);
      });
      return acc;
    };
  } else {
    m.div_r_b2 = [s, n, j](double t, std::span<const double> x, std::span<const double> r) {
      Point centre{};
      std::copy(x.begin(), x.end(), centre.begin());
      std::copy(r.begin(), r.end(), centre.begin() + static_cast<std::ptrdiff_t>(n));
      double acc = 0.0;
      Point v{};
      s->for_each_node(std::span<const double>(centre.data(), n + j), n + j, n > 0,
                       [&](std::span<const double> y, double, std::span<const double> dw) {
                         s->base.b2(t, y.first(n), y.subspan(n, j), std::span<double>(v.data(), j));
                         for (std::size_t i = 0; i < j; ++i) acc += dw[n + i] * v[i];
                       });
      return acc;
    };
  }
  return m;
}

// ---------------------------------------------------------------------------

double fragmentation_kernel(double r, double rt) {
  if (!(r > 0.0) || !(rt > 0.0)) throw DomainError("fragmentation kernel needs r, r~ > 0");
  return r < rt ? 1.0 / rt : 0.0;
}

Kernel zero_kernel() {
  Kernel k;
  k.name = "zero";
  k.gamma = [](double, std::span<const double>, std::span<const double>, std::span<const double>) { return 0.0; };
  k.identically_zero = true;
  return k;
}

Kernel constant_kernel(double c) {
  Kernel k;
  k.name = "constant";
  k.params = {{"c", c}};
  k.gamma = [c](double, std::span<const double>, std::span<const double>, std::span<const double>) { return c; };
  k.identically_zero = c == 0.0;
  return k;
}

Kernel fragmentation(double scale, double modulation) {
  if (std::abs(modulation) >= 1.0) throw DomainError("fragmentation modulation must satisfy |a| < 1");
  Kernel k;
  k.name = "fragmentation";
  k.params = {{"scale", scale}, {"modulation", modulation}};
  auto rate = [scale, modulation](std::span<const double> x) {
    return modulation == 0.0 || x.empty() ? scale : scale * (1.0 + modulation * std::sin(x[0]));
  };
  k.gamma = [rate](double, std::span<const double> x, std::span<const double> r, std::span<const double> rt) {
    return rate(x) * fragmentation_kernel(r[0], rt[0]);
  };
  k.interior = [rate](double, std::span<const double> x, std::span<const double> r, std::span<const double> rt) {
    if (!(r[0] > 0.0) || !(rt[0] > 0.0)) throw DomainError("fragmentation kernel needs r, r~ > 0");
    return rate(x) / rt[0];
  };
  k.support = KernelSupport::lower_triangular;
  k.singularity_exponent = -1.0;
  k.identically_zero = scale == 0.0;
  return k;
}

std::vector<std::string> kernel_catalogue() { return {"zero", "constant", "fragmentation"}; }

Kernel make_kernel(const std::string& name, const ParamMap& p) {
  const std::string what = "kernel '" + name + "'";
  if (name == "zero") {
    require_known(p, {}, what);
    return zero_kernel();
  }
  if (name == "constant") {
    require_known(p, {"c"}, what);
    return constant_kernel(param(p, "c", 1.0));
  }
  if (name == "fragmentation") {
    require_known(p, {"scale", "modulation"}, what);
    try {
      return fragmentation(param(p, "scale", 2.0), param(p, "modulation", 0.0));
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  std::string list;
  for (const auto& c : kernel_catalogue()) list += (list.empty() ? "" : ", ") + c;
  throw ConfigError("unknown kernel '" + name + "'; available: " + list);
}

// ---------------------------------------------------------------------------

FiberQuadrature::FiberQuadrature(const GridSpec& grid, KernelSupport support)
    : triangular_(support == KernelSupport::lower_triangular), full_(grid.r_weights()) {
  if (!triangular_) return;
  if (grid.j() != 1) throw DomainError("triangular kernels need exactly one r-axis");
  const Axis& axis = grid.r_axes.front();
  tails_.resize(axis.count);
  for (std::size_t i = 0; i + 1 < axis.count; ++i) tails_[i] = axis.weights(i, axis.count - 1);
  tails_.back() = {0.0};
}

std::span<const double> FiberQuadrature::weights(std::size_t row) const {
  return triangular_ ? std::span<const double>(tails_[row]) : std::span<const double>(full_);
}

double kernel_slab_bound(const Kernel& kernel, const GridSpec& grid, double p, double t_lo, double t_hi) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("kernel_slab_bound needs p in [1, inf)");
  if (!(t_hi >= t_lo)) throw DomainError("kernel_slab_bound needs t_lo <= t_hi");
  if (kernel.identically_zero || t_hi == t_lo) return 0.0;

  std::vector<double> times{t_lo};
  for (double t : grid.time_nodes)
    if (t > t_lo && t < t_hi) times.push_back(t);
  times.push_back(t_hi);
  const auto tw = trapezoid_weights(times);

  const FiberQuadrature quad(grid, kernel.support);
  const auto wr = grid.r_weights();
  const std::size_t nx = grid.x_size(), nr = grid.r_size(), n = grid.n(), j = grid.j();
  const double pp = p == 1.0 ? 0.0 : p / (p - 1.0);

  Point x{}, r{}, rt{};
  double worst = 0.0;
  for (std::size_t ix = 0; ix < nx; ++ix) {
    grid.x_point(ix, std::span<double>(x.data(), n));
    const auto xs = std::span<const double>(x.data(), n);
    double slab = 0.0;
    for (std::size_t s = 0; s < times.size(); ++s) {
      double outer = 0.0;
      for (std::size_t i = 0; i < nr; ++i) {
        grid.r_point(i, std::span<double>(r.data(), j));
        const auto w = quad.weights(i);
        const std::size_t first = quad.first(i);
        double inner = 0.0;
        for (std::size_t l = 0; l < w.size(); ++l) {
          grid.r_point(first + l, std::span<double>(rt.data(), j));
          const double g = std::abs(quad.triangular()
                                        ? kernel.on_support(times[s], xs, std::span<const double>(r.data(), j),
                                                            std::span<const double>(rt.data(), j))
                                        : kernel.gamma(times[s], xs, std::span<const double>(r.data(), j),
                                                       std::span<const double>(rt.data(), j)));
          if (!std::isfinite(g)) return std::numeric_limits<double>::infinity();
          if (p == 1.0)
            inner = std::max(inner, w[l] > 0.0 ? g : 0.0);
          else
            inner += w[l] * std::pow(g, pp);
        }
        outer += wr[i] * (p == 1.0 ? inner : std::pow(inner, p - 1.0));
      }
      slab += tw[s] * std::pow(outer, 1.0 / p);
    }
    worst = std::max(worst, slab);
  }
  return worst;
}

}  // namespace rlflow

#include "rlflow/flow.hpp"

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

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

// State layout: [X1 (n), logJ1, then per r-label: X2 (j), logJ].
class FiberSystem {
 public:
  FiberSystem(const StructuredVectorField& field, std::size_t labels)
      : f_(field), n_(field.n), j_(field.j), labels_(labels) {}

  std::size_t size() const { return n_ + 1 + labels_ * (j_ + 1); }
  std::size_t label_offset(std::size_t l) const { return n_ + 1 + l * (j_ + 1); }

  void rhs(double t, const std::vector<double>& y, std::vector<double>& dy) const {
    const auto x1 = std::span<const double>(y).first(n_);
    double divx = 0.0;
    if (n_ > 0) {
      f_.b1(t, x1, std::span<double>(dy).first(n_));
      divx = f_.div_x_b1(t, x1);
    }
    dy[n_] = divx;
    for (std::size_t l = 0; l < labels_; ++l) {
      const std::size_t o = label_offset(l);
      double divr = 0.0;
      if (j_ > 0) {
        const auto x2 = std::span<const double>(y).subspan(o, j_);
        f_.b2(t, x1, x2, std::span<double>(dy).subspan(o, j_));
        divr = f_.div_r_b2(t, x1, x2);
      }
      dy[o + j_] = divx + divr;
    }
  }

 private:
  const StructuredVectorField& f_;
  std::size_t n_, j_, labels_;
};

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void check_times(std::span<const double> times) {
  if (times.size() < 2) throw DomainError("integration needs at least two time nodes");
  const double sign = times[1] > times[0] ? 1.0 : -1.0;
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(sign * (times[i] - times[i - 1]) > 0.0)) throw DomainError("time nodes must be strictly monotone");
}

}  // namespace

std::size_t FlowSample::node_of(double t) const {
  for (std::size_t k = 0; k < times.size(); ++k)
    if (std::abs(times[k] - t) <= 1e-12 * std::max(1.0, std::abs(t))) return k;
  throw DomainError("time " + std::to_string(t) + " is not a node of the flow sample");
}

std::vector<FlowSample> integrate_fiber(const StructuredVectorField& field, std::span<const double> x,
                                        std::span<const double> r_labels, std::span<const double> times,
                                        double tol, IntegratorStats* stats) {
  if (!(tol > 0.0)) throw DomainError("integrator tolerance must be positive");
  check_times(times);
  const std::size_t n = field.n, j = field.j;
  if (x.size() != n) throw DomainError("x label dimension does not match the field");
  if (j == 0 ? !r_labels.empty() : r_labels.size() % j != 0)
    throw DomainError("r labels do not match the field's r-dimension");
  const std::size_t labels = j == 0 ? 1 : r_labels.size() / j;
  if (labels == 0) return {};

  FiberSystem sys(field, labels);
  const std::size_t m = sys.size();
  std::vector<double> y(m, 0.0);
  std::copy(x.begin(), x.end(), y.begin());
  for (std::size_t l = 0; l < labels; ++l)
    for (std::size_t d = 0; d < j; ++d) y[sys.label_offset(l) + d] = r_labels[l * j + d];

  std::vector<FlowSample> out(labels);
  for (std::size_t l = 0; l < labels; ++l) {
    auto& s = out[l];
    s.dim = n + j;
    s.label.assign(x.begin(), x.end());
    for (std::size_t d = 0; d < j; ++d) s.label.push_back(r_labels[l * j + d]);
    s.times.assign(times.begin(), times.end());
    s.positions.resize(times.size() * s.dim);
    s.logJ1.resize(times.size());
    s.logJ.resize(times.size());
  }
  auto record = [&](std::size_t node) {
    for (std::size_t l = 0; l < labels; ++l) {
      auto& s = out[l];
      const std::size_t o = sys.label_offset(l);
      double* p = s.positions.data() + node * s.dim;
      std::copy(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n), p);
      std::copy(y.begin() + static_cast<std::ptrdiff_t>(o), y.begin() + static_cast<std::ptrdiff_t>(o + j), p + n);
      s.logJ1[node] = y[n];
      s.logJ[node] = y[o + j];
    }
  };
  record(0);

  std::vector<double> k1(m), k2(m), k3(m), k4(m), k5(m), k6(m), k7(m), tmp(m), y5(m);
  const double sign = times[1] > times[0] ? 1.0 : -1.0;
  double t = times[0];
  sys.rhs(t, y, k1);
  double h_nat = std::min(std::abs(times.back() - times.front()), 0.05);
  if (field.lipschitz_hint && *field.lipschitz_hint > 0.0) h_nat = std::min(h_nat, 0.2 / *field.lipschitz_hint);
  IntegratorStats local;

  for (std::size_t node = 1; node < times.size(); ++node) {
    const double target = times[node];
    while (sign * (target - t) > 0.0) {
      const double remaining = std::abs(target - t);
      bool last = h_nat >= remaining * (1.0 - 1e-12);
      const double h = sign * (last ? remaining : h_nat);
      const double floor = 1e-13 * std::max(1.0, std::abs(t));
      if (std::abs(h) < floor)
        throw IntegrationFailure("step size underflow in flow integration (field too rough for tol)", t, y);

      for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + h * a21 * k1[i];
      sys.rhs(t + c2 * h, tmp, k2);
      for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
      sys.rhs(t + c3 * h, tmp, k3);
      for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
      sys.rhs(t + c4 * h, tmp, k4);
      for (std::size_t i = 0; i < m; ++i)
        tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
      sys.rhs(t + c5 * h, tmp, k5);
      for (std::size_t i = 0; i < m; ++i)
        tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
      sys.rhs(t + h, tmp, k6);
      for (std::size_t i = 0; i < m; ++i)
        y5[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
      sys.rhs(t + h, y5, k7);

      double err = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        const double scale = tol * (1.0 + std::max(std::abs(y[i]), std::abs(y5[i])));
        err = std::max(err, std::abs(e) / scale);
      }
      if (!std::isfinite(err) || !all_finite(y5)) {
        if (std::abs(h) <= floor * 2.0) throw IntegrationFailure("non-finite state in flow integration", t, y);
        h_nat = 0.25 * std::abs(h);
        ++local.rejected;
        continue;
      }
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      if (err <= 1.0) {
        t = last ? target : t + h;
        y.swap(y5);
        k1.swap(k7);
        const double proposal = std::abs(h) * fac;
        h_nat = last && std::abs(h) < h_nat ? std::max(h_nat, proposal) : proposal;
        ++local.accepted;
      } else {
        h_nat = std::abs(h) * fac;
        ++local.rejected;
      }
    }
    record(node);
  }
  if (stats) {
    stats->accepted += local.accepted;
    stats->rejected += local.rejected;
  }
  return out;
}

FlowSample integrate_flow(const StructuredVectorField& field, std::span<const double> label,
                          std::span<const double> times, double tol) {
  if (label.size() != field.dim()) throw DomainError("label dimension does not match the field");
  auto samples = integrate_fiber(field, label.first(field.n), label.subspan(field.n), times, tol);
  return std::move(samples.front());
}

FlowSample integrate_flow(const StructuredVectorField& field, std::span<const double> label, double t0,
                          double t1, double tol) {
  if (t0 == t1) {
    FlowSample s;
    s.label.assign(label.begin(), label.end());
    s.dim = label.size();
    s.times = {t0};
    s.positions = s.label;
    s.logJ1 = {0.0};
    s.logJ = {0.0};
    return s;
  }
  const std::array<double, 2> times{t0, t1};
  return integrate_flow(field, label, times, tol);
}

FlowMap flow_map(const StructuredVectorField& field, const GridSpec& grid, std::span<const double> times,
                 double tol, std::size_t workers) {
  grid.validate();
  if (grid.n() != field.n || grid.j() != field.j)
    throw DomainError("grid dimensions do not match field '" + field.name + "'");
  FlowMap map;
  map.grid = grid;
  map.times = times.empty() ? grid.time_nodes : std::vector<double>(times.begin(), times.end());
  check_times(map.times);
  map.direction = map.times[1] > map.times[0] ? Direction::forward : Direction::backward;
  const std::size_t nx = grid.x_size(), nr = grid.r_size(), n = grid.n(), j = grid.j();
  map.samples.resize(grid.node_count());

  std::vector<double> r_labels(nr * j);
  for (std::size_t ir = 0; ir < nr; ++ir) grid.r_point(ir, std::span<double>(r_labels).subspan(ir * j, j));

  parallel_for(nx, workers, [&](std::size_t ix) {
    std::array<double, kMaxDim> x{};
    grid.x_point(ix, std::span<double>(x.data(), n));
    try {
      auto fiber = integrate_fiber(field, std::span<const double>(x.data(), n), r_labels, map.times, tol);
      for (std::size_t ir = 0; ir < nr; ++ir) map.samples[ix * nr + ir] = std::move(fiber[ir]);
    } catch (const IntegrationFailure& e) {
      std::ostringstream os;
      os << e.what() << " (x-fiber " << ix << ", labels " << ix * nr << ".." << ix * nr + nr - 1 << ")";
      throw IntegrationFailure(os.str(), e.time(), e.state());
    }
  });
  return map;
}

FlowMap flow_map(const StructuredVectorField& field, const GridSpec& grid, Direction direction, double tol,
                 std::size_t workers) {
  std::vector<double> times = grid.time_nodes;
  if (direction == Direction::backward) std::reverse(times.begin(), times.end());
  return flow_map(field, grid, times, tol, workers);
}

std::vector<double> interpolate_position(const StructuredVectorField& field, const FlowSample& sample, double t) {
  const auto& ts = sample.times;
  const double lo = std::min(ts.front(), ts.back()), hi = std::max(ts.front(), ts.back());
  if (t < lo || t > hi) throw DomainError("interpolation time outside the sample range");
  std::size_t k = 0;
  while (k + 2 < ts.size() && (ts[k + 1] - t) * (ts[1] - ts[0]) < 0.0) ++k;
  const double t0 = ts[k], t1 = ts[k + 1], h = t1 - t0, s = (t - t0) / h;
  const auto p0 = sample.position(k), p1 = sample.position(k + 1);
  const auto v0 = eval_field(field, t0, p0), v1 = eval_field(field, t1, p1);
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s), h01 = s * s * (3 - 2 * s),
               h11 = s * s * (s - 1);
  std::vector<double> out(sample.dim);
  for (std::size_t d = 0; d < sample.dim; ++d)
    out[d] = h00 * p0[d] + h10 * h * v0[d] + h01 * p1[d] + h11 * h * v1[d];
  return out;
}

double density_rho2_at(const FlowSample& sample, std::size_t node) {
  return std::exp(sample.logJ.at(node) - sample.logJ1.at(node));
}

double density_rho2(const FlowSample& sample, double t) { return density_rho2_at(sample, sample.node_of(t)); }

CompressibilityReport check_compressibility(const FlowMap& map, const StructuredVectorField& field, double slack) {
  CompressibilityReport rep;
  rep.times = map.times;
  const std::size_t nt = map.times.size(), dim = map.grid.dim();
  std::vector<double> sup(nt, 0.0), supx(nt, 0.0);
  std::array<double, kMaxDim> p{};
  for (std::size_t k = 0; k < nt; ++k) {
    const double t = map.times[k];
    auto visit = [&](std::span<const double> pt) {
      const auto d = eval_divergence(field, t, pt);
      sup[k] = std::max(sup[k], std::abs(d.total));
      supx[k] = std::max(supx[k], std::abs(d.div_x_b1));
    };
    for (std::size_t node = 0; node < map.grid.node_count(); ++node) {
      map.grid.point(node, std::span<double>(p.data(), dim));
      visit(std::span<const double>(p.data(), dim));
    }
    for (const auto& s : map.samples) visit(s.position(k));
  }
  if (field.autonomous) {
    const double a = *std::max_element(sup.begin(), sup.end());
    const double b = *std::max_element(supx.begin(), supx.end());
    std::fill(sup.begin(), sup.end(), a);
    std::fill(supx.begin(), supx.end(), b);
  }
  rep.divergence_integral.assign(nt, 0.0);
  rep.divergence_x_integral.assign(nt, 0.0);
  for (std::size_t k = 1; k < nt; ++k) {
    const double dt = std::abs(map.times[k] - map.times[k - 1]);
    rep.divergence_integral[k] = rep.divergence_integral[k - 1] + 0.5 * dt * (sup[k] + sup[k - 1]);
    rep.divergence_x_integral[k] = rep.divergence_x_integral[k - 1] + 0.5 * dt * (supx[k] + supx[k - 1]);
  }
  const double up = std::log1p(slack), down = std::log1p(-slack);
  double worst = 0.0;
  for (std::size_t si = 0; si < map.samples.size(); ++si) {
    const auto& s = map.samples[si];
    for (std::size_t k = 0; k < nt; ++k) {
      worst = std::max(worst, -s.logJ[k]);
      const double D = rep.divergence_integral[k], D1 = rep.divergence_x_integral[k];
      if (s.logJ[k] > D + up) rep.bound_violations.push_back({si, map.times[k], s.logJ[k] - D, "rho upper"});
      if (s.logJ[k] < -D + down) rep.bound_violations.push_back({si, map.times[k], -D - s.logJ[k], "rho lower"});
      if (s.logJ1[k] > D1 + up) rep.bound_violations.push_back({si, map.times[k], s.logJ1[k] - D1, "rho1 upper"});
      if (s.logJ1[k] < -D1 + down)
        rep.bound_violations.push_back({si, map.times[k], -D1 - s.logJ1[k], "rho1 lower"});
    }
  }
  rep.incompressibility_constant = std::exp(worst);
  return rep;
}

double inflow_measure(const StructuredVectorField& field, double R, double rho, double t, const GridSpec& probe_grid,
                      double tol) {
  if (!(R > rho && rho > 0.0)) throw DomainError("inflow_measure needs R > rho > 0");
  const auto w = probe_grid.node_weights();
  std::vector<double> times{0.0, t};
  if (t == 0.0) times.pop_back();
  double measure = 0.0;
  if (times.size() < 2) {
    return 0.0;
  }
  const auto map = flow_map(field, probe_grid, times, tol);
  for (std::size_t i = 0; i < map.samples.size(); ++i) {
    const auto& s = map.samples[i];
    double l2 = 0.0, p2 = 0.0;
    for (double v : s.label) l2 += v * v;
    for (double v : s.position(1)) p2 += v * v;
    if (std::sqrt(l2) > R && std::sqrt(p2) < rho) measure += w[i];
  }
  return measure;
}

TestFunction gaussian_test_function(std::vector<double> centre, double width) {
  TestFunction f;
  for (double c : centre) f.support.push_back({c - 9.0 * width, c + 9.0 * width});
  f.value = [centre, width](std::span<const double> p) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < centre.size(); ++i) d2 += (p[i] - centre[i]) * (p[i] - centre[i]);
    return std::exp(-0.5 * d2 / (width * width));
  };
  return f;
}

ChangeOfVariablesResidual verify_change_of_variables(const StructuredVectorField& field, const TestFunction& phi,
                                                     double t, const GridSpec& grid, double tol, std::size_t workers) {
  const std::size_t dim = grid.dim(), n = grid.n();
  if (phi.support.size() != dim) throw DomainError("test function support does not match grid dimension");
  ChangeOfVariablesResidual res;
  if (t == 0.0) return res;

  const std::vector<double> fwd_times{0.0, t}, bwd_times{t, 0.0};
  const auto fwd = flow_map(field, grid, fwd_times, tol, workers);
  const auto bwd = flow_map(field, grid, bwd_times, tol, workers);

  std::vector<double> disp(dim, 0.0);
  for (const auto* map : {&fwd, &bwd})
    for (const auto& s : map->samples)
      for (std::size_t d = 0; d < dim; ++d) disp[d] = std::max(disp[d], std::abs(s.position(1)[d] - s.label[d]));
  for (std::size_t d = 0; d < dim; ++d) {
    const Axis& axis = d < n ? grid.x_axes[d] : grid.r_axes[d - n];
    if (phi.support[d].lo - disp[d] < axis.lo || phi.support[d].hi + disp[d] > axis.hi)
      throw DomainError("test function support plus displacement leaves the grid on axis " + std::to_string(d));
  }

  const auto w = grid.node_weights();
  double lhs1 = 0.0, rhs1 = 0.0, lhs2 = 0.0, rhs2 = 0.0;
  std::array<double, kMaxDim> q{};
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto& b = bwd.samples[i];
    const double at_node = phi.value(b.label);
    lhs1 += w[i] * at_node * std::exp(b.logJ1[1]);
    lhs2 += w[i] * at_node * std::exp(b.logJ[1]);
    const auto& f = fwd.samples[i];
    const auto x = f.position(1);
    rhs2 += w[i] * phi.value(x);
    std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n), q.begin());
    std::copy(f.label.begin() + static_cast<std::ptrdiff_t>(n), f.label.end(), q.begin() + static_cast<std::ptrdiff_t>(n));
    rhs1 += w[i] * phi.value(std::span<const double>(q.data(), dim));
  }
  res.first = std::abs(lhs1 - rhs1);
  res.second = std::abs(lhs2 - rhs2);
  return res;
}

void write_flow_csv(const FlowMap& map, const std::string& path) {
  const std::size_t n = map.grid.n(), j = map.grid.j();
  auto header = numbered("x", n);
  for (auto& s : numbered("r", j)) header.push_back(s);
  header.push_back("t");
  for (auto& s : numbered("X", n)) header.push_back(s);
  for (auto& s : numbered("R", j)) header.push_back(s);
  header.push_back("logJ1");
  header.push_back("logJ");
  CsvWriter csv(path, header);
  std::vector<double> row;
  for (const auto& s : map.samples) {
    for (std::size_t k = 0; k < s.times.size(); ++k) {
      row.assign(s.label.begin(), s.label.end());
      row.push_back(s.times[k]);
      for (double v : s.position(k)) row.push_back(v);
      row.push_back(s.logJ1[k]);
      row.push_back(s.logJ[k]);
      csv.row(row);
    }
  }
}

}  // namespace rlflow

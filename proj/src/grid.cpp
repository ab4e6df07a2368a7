#include "rlflow/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "rlflow/errors.hpp"

namespace rlflow {

namespace {

std::size_t block_size(const std::vector<Axis>& axes) {
  std::size_t size = 1;
  for (const auto& a : axes) size *= a.count;
  return size;
}

void block_point(const std::vector<Axis>& axes, std::size_t index, std::span<double> out) {
  for (std::size_t d = axes.size(); d-- > 0;) {
    const std::size_t c = axes[d].count;
    out[d] = axes[d].node(index % c);
    index /= c;
  }
}

std::vector<double> block_weights(const std::vector<Axis>& axes) {
  std::vector<double> w(block_size(axes), 1.0);
  std::size_t stride = w.size();
  for (const auto& a : axes) {
    const auto aw = a.weights();
    stride /= a.count;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= aw[(i / stride) % a.count];
  }
  return w;
}

// Weights of one axis restricted to [iv.lo, iv.hi]; zero outside.
std::vector<double> axis_window_weights(const Axis& axis, const Interval& iv) {
  const double slack = 1e-12 * std::max({1.0, std::abs(axis.lo), std::abs(axis.hi)});
  if (!(iv.lo < iv.hi) || iv.lo < axis.lo - slack || iv.hi > axis.hi + slack)
    throw DomainError("window [" + std::to_string(iv.lo) + ", " + std::to_string(iv.hi) +
                      "] is not a nonempty sub-interval of the grid axis [" +
                      std::to_string(axis.lo) + ", " + std::to_string(axis.hi) + "]");
  std::size_t first = axis.count, last = 0;
  for (std::size_t i = 0; i < axis.count; ++i) {
    const double x = axis.node(i);
    if (x >= iv.lo - slack && x <= iv.hi + slack) {
      first = std::min(first, i);
      last = std::max(last, i);
    }
  }
  if (first >= axis.count || last <= first)
    throw DomainError("window must contain at least two grid nodes per axis");
  std::vector<double> w(axis.count, 0.0);
  const auto sub = axis.weights(first, last);
  std::copy(sub.begin(), sub.end(), w.begin() + static_cast<std::ptrdiff_t>(first));
  return w;
}

}  // namespace

void Axis::validate() const {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
    throw DomainError("grid axis needs a nonempty finite interval");
  if (count < 2) throw DomainError("grid axis needs at least two nodes");
  if (spacing == Spacing::logarithmic && !(lo > 0.0))
    throw DomainError("logarithmic axis needs a positive lower bound");
}

double Axis::node(std::size_t i) const {
  const double frac = static_cast<double>(i) / static_cast<double>(count - 1);
  if (i + 1 == count) return hi;
  if (spacing == Spacing::logarithmic) return lo * std::exp(frac * std::log(hi / lo));
  return lo + frac * (hi - lo);
}

std::vector<double> Axis::nodes() const {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = node(i);
  return out;
}

std::vector<double> Axis::weights(std::size_t first, std::size_t last) const {
  if (last >= count || last <= first) throw DomainError("axis sub-range needs two nodes");
  const std::size_t m = last - first + 1;
  if (spacing == Spacing::uniform) {
    const double h = (hi - lo) / static_cast<double>(count - 1);
    return simpson_weights(m, h);
  }
  const double hs = std::log(hi / lo) / static_cast<double>(count - 1);
  auto w = simpson_weights(m, hs);
  for (std::size_t k = 0; k < m; ++k) w[k] *= node(first + k);
  return w;
}

void GridSpec::validate() const {
  if (dim() == 0) throw DomainError("grid needs at least one space axis");
  if (dim() > kMaxDim) throw DomainError("grid dimension exceeds " + std::to_string(kMaxDim));
  for (const auto& a : x_axes) a.validate();
  for (const auto& a : r_axes) a.validate();
  if (time_nodes.size() < 2) throw DomainError("need at least two time nodes");
  if (time_nodes.front() != 0.0) throw DomainError("first time node must be 0");
  for (std::size_t i = 1; i < time_nodes.size(); ++i)
    if (!(time_nodes[i] > time_nodes[i - 1]) || !std::isfinite(time_nodes[i]))
      throw DomainError("time nodes must be finite and strictly increasing");
}

std::size_t GridSpec::x_size() const { return block_size(x_axes); }
std::size_t GridSpec::r_size() const { return block_size(r_axes); }

void GridSpec::x_point(std::size_t ix, std::span<double> out) const {
  block_point(x_axes, ix, out);
}
void GridSpec::r_point(std::size_t ir, std::span<double> out) const {
  block_point(r_axes, ir, out);
}
void GridSpec::point(std::size_t node, std::span<double> out) const {
  const std::size_t rs = r_size();
  x_point(node / rs, out.first(n()));
  r_point(node % rs, out.subspan(n(), j()));
}

std::vector<double> GridSpec::x_weights() const { return block_weights(x_axes); }
std::vector<double> GridSpec::r_weights() const { return block_weights(r_axes); }

std::vector<double> GridSpec::node_weights() const {
  const auto wx = x_weights();
  const auto wr = r_weights();
  std::vector<double> w(wx.size() * wr.size());
  for (std::size_t ix = 0; ix < wx.size(); ++ix)
    for (std::size_t ir = 0; ir < wr.size(); ++ir) w[ix * wr.size() + ir] = wx[ix] * wr[ir];
  return w;
}

std::vector<double> uniform_times(double horizon, std::size_t count) {
  if (!(horizon > 0.0) || count < 2) throw DomainError("uniform_times needs T > 0 and count >= 2");
  std::vector<double> t(count);
  for (std::size_t i = 0; i < count; ++i)
    t[i] = horizon * static_cast<double>(i) / static_cast<double>(count - 1);
  t.back() = horizon;
  return t;
}

std::vector<double> simpson_weights(std::size_t count, double h) {
  if (count < 2) throw DomainError("quadrature needs at least two nodes");
  std::vector<double> w(count, 0.0);
  if (count == 2) {
    w[0] = w[1] = 0.5 * h;
    return w;
  }
  const std::size_t simpson_count = (count % 2 == 1) ? count : count - 1;
  for (std::size_t i = 0; i < simpson_count; ++i) {
    if (i == 0 || i + 1 == simpson_count)
      w[i] = h / 3.0;
    else
      w[i] = (i % 2 == 1) ? 4.0 * h / 3.0 : 2.0 * h / 3.0;
  }
  if (simpson_count != count) {
    w[count - 2] += 0.5 * h;
    w[count - 1] += 0.5 * h;
  }
  return w;
}

std::vector<double> trapezoid_weights(std::span<const double> s) {
  std::vector<double> w(s.size(), 0.0);
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double half = 0.5 * (s[i] - s[i - 1]);
    w[i - 1] += half;
    w[i] += half;
  }
  return w;
}

void NormSpec::validate() const {
  if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("norm exponent p must lie in [1, inf)");
}

std::vector<double> window_weights(const GridSpec& grid, const Window& window) {
  if (!window.x.empty() && window.x.size() != grid.n())
    throw DomainError("window x-block dimension does not match the grid");
  if (!window.r.empty() && window.r.size() != grid.j())
    throw DomainError("window r-block dimension does not match the grid");

  std::vector<std::vector<double>> per_axis;
  auto collect = [&](const std::vector<Axis>& axes, const std::vector<Interval>& ivs) {
    for (std::size_t d = 0; d < axes.size(); ++d)
      per_axis.push_back(ivs.empty() ? axes[d].weights() : axis_window_weights(axes[d], ivs[d]));
  };
  collect(grid.x_axes, window.x);
  collect(grid.r_axes, window.r);

  std::vector<Axis> all = grid.x_axes;
  all.insert(all.end(), grid.r_axes.begin(), grid.r_axes.end());
  std::vector<double> w(grid.node_count(), 1.0);
  std::size_t stride = w.size();
  for (std::size_t d = 0; d < all.size(); ++d) {
    stride /= all[d].count;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= per_axis[d][(i / stride) % all[d].count];
  }
  return w;
}

LpNorm::LpNorm(const GridSpec& grid, const NormSpec& spec)
    : p_(spec.p), weights_(window_weights(grid, spec.window)) {
  spec.validate();
}

double LpNorm::operator()(std::span<const double> values) const {
  if (values.size() != weights_.size()) throw DomainError("field size does not match grid");
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    if (!std::isfinite(values[i])) throw DomainError("non-finite field value inside norm window");
    acc += weights_[i] * (p_ == 1.0 ? std::abs(values[i]) : std::pow(std::abs(values[i]), p_));
  }
  return p_ == 1.0 ? acc : std::pow(acc, 1.0 / p_);
}

double LpNorm::distance(std::span<const double> a, std::span<const double> b) const {
  if (a.size() != weights_.size() || b.size() != weights_.size())
    throw DomainError("field size does not match grid");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    const double d = std::abs(a[i] - b[i]);
    acc += weights_[i] * (p_ == 1.0 ? d : std::pow(d, p_));
  }
  return p_ == 1.0 ? acc : std::pow(acc, 1.0 / p_);
}

double lp_norm(const GridSpec& grid, std::span<const double> values, const NormSpec& spec) {
  return LpNorm(grid, spec)(values);
}

double lp_norm(const DiscreteField& field, const NormSpec& spec) {
  return lp_norm(field.grid, field.values, spec);
}

double sup_in_time(std::span<const double> series) {
  if (series.empty()) throw DomainError("sup_in_time of an empty series");
  return *std::max_element(series.begin(), series.end());
}

double integrate_r(const GridSpec& grid, std::span<const double> fiber) {
  const auto w = grid.r_weights();
  if (fiber.size() != w.size()) throw DomainError("fiber size does not match the r-grid");
  return std::inner_product(w.begin(), w.end(), fiber.begin(), 0.0);
}

double integrate_r(const GridSpec& grid, std::span<const double> fiber, std::size_t first) {
  if (grid.j() != 1) throw DomainError("sub-range r-integration needs a single r-axis");
  const Axis& axis = grid.r_axes.front();
  if (fiber.size() != axis.count) throw DomainError("fiber size does not match the r-grid");
  if (first + 1 >= axis.count) return 0.0;
  const auto w = axis.weights(first, axis.count - 1);
  return std::inner_product(w.begin(), w.end(), fiber.begin() + static_cast<std::ptrdiff_t>(first), 0.0);
}

std::optional<double> interpolate(const GridSpec& grid, std::span<const double> values,
                                  std::span<const double> point) {
  const std::size_t dim = grid.dim();
  if (point.size() != dim || values.size() != grid.node_count())
    throw DomainError("interpolation point or values do not match the grid");
  std::array<std::size_t, kMaxDim> lower{}, stride{};
  std::array<double, kMaxDim> frac{};
  std::size_t s = 1;
  for (std::size_t d = dim; d-- > 0;) {
    const Axis& a = d < grid.n() ? grid.x_axes[d] : grid.r_axes[d - grid.n()];
    stride[d] = s;
    s *= a.count;
    const double slack = 1e-12 * std::max({1.0, std::abs(a.lo), std::abs(a.hi)});
    const double v = point[d];
    if (!(v >= a.lo - slack && v <= a.hi + slack)) return std::nullopt;
    const double cells = static_cast<double>(a.count - 1);
    double u = a.spacing == Spacing::logarithmic ? std::log(std::max(v, a.lo) / a.lo) / std::log(a.hi / a.lo)
                                                 : (v - a.lo) / (a.hi - a.lo);
    u = std::clamp(u * cells, 0.0, cells);
    const std::size_t i = std::min(static_cast<std::size_t>(u), a.count - 2);
    lower[d] = i;
    frac[d] = u - static_cast<double>(i);
  }
  double acc = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << dim); ++corner) {
    double w = 1.0;
    std::size_t idx = 0;
    for (std::size_t d = 0; d < dim; ++d) {
      const bool up = (corner >> d) & 1U;
      w *= up ? frac[d] : 1.0 - frac[d];
      idx += (lower[d] + (up ? 1 : 0)) * stride[d];
    }
    if (w != 0.0) acc += w * values[idx];
  }
  return acc;
}

}  // namespace rlflow

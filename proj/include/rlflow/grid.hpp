#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace rlflow {

/// Largest supported total dimension n + j.
inline constexpr std::size_t kMaxDim = 8;

enum class Spacing { uniform, logarithmic };

/// One coordinate axis of a truncated tensor grid.
///
/// Logarithmic axes place nodes uniformly in log(coordinate); their quadrature
/// weights are the composite Simpson weights in the log variable multiplied by
/// the node value (the Jacobian of r = exp(s)). Such axes require lo > 0 and
/// are meant for r-axes carrying kernels singular at r -> 0.
struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t count = 2;
  Spacing spacing = Spacing::uniform;

  void validate() const;
  double node(std::size_t i) const;
  std::vector<double> nodes() const;
  /// Quadrature weights of the sub-range [first, last] (inclusive), zero-based
  /// relative to `first`.
  std::vector<double> weights(std::size_t first, std::size_t last) const;
  std::vector<double> weights() const { return weights(0, count - 1); }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Tensor grid over (x, r) plus the time nodes of a run.
///
/// Node ordering is x-major: node = ix * r_size() + ir, with the last axis of
/// each block varying fastest. The r-fiber of a fixed x is therefore contiguous.
struct GridSpec {
  std::vector<Axis> x_axes;
  std::vector<Axis> r_axes;
  std::vector<double> time_nodes;

  void validate() const;

  std::size_t n() const { return x_axes.size(); }
  std::size_t j() const { return r_axes.size(); }
  std::size_t dim() const { return n() + j(); }
  std::size_t x_size() const;
  std::size_t r_size() const;
  std::size_t node_count() const { return x_size() * r_size(); }
  double horizon() const { return time_nodes.back(); }

  void x_point(std::size_t ix, std::span<double> out) const;
  void r_point(std::size_t ir, std::span<double> out) const;
  /// Full (x, r) coordinates of a node.
  void point(std::size_t node, std::span<double> out) const;

  std::vector<double> x_weights() const;
  std::vector<double> r_weights() const;
  std::vector<double> node_weights() const;
};

/// `count` equispaced nodes on [0, horizon].
std::vector<double> uniform_times(double horizon, std::size_t count);

/// Composite Simpson weights for `count` equispaced nodes of spacing h.
/// Even counts use Simpson on the first count-1 nodes and the trapezoid rule
/// on the last cell; count == 2 is the plain trapezoid rule.
std::vector<double> simpson_weights(std::size_t count, double h);

/// Trapezoid weights for arbitrary increasing abscissae.
std::vector<double> trapezoid_weights(std::span<const double> abscissae);

/// Compact sub-box of the grid. Empty per-block vectors mean "whole axis".
struct Window {
  std::vector<Interval> x;
  std::vector<Interval> r;
};

struct NormSpec {
  double p = 2.0;
  Window window;

  void validate() const;
};

struct DiscreteField {
  GridSpec grid;
  std::vector<double> values;
};

/// Per-node weights of the window's composite rule; zero outside the window.
std::vector<double> window_weights(const GridSpec& grid, const Window& window);

/// Windowed discrete L^p norm with cached weights.
class LpNorm {
 public:
  LpNorm(const GridSpec& grid, const NormSpec& spec);
  double operator()(std::span<const double> values) const;
  /// Norm of a - b without materialising the difference.
  double distance(std::span<const double> a, std::span<const double> b) const;
  double p() const { return p_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  double p_;
  std::vector<double> weights_;
};

double lp_norm(const GridSpec& grid, std::span<const double> values, const NormSpec& spec);
double lp_norm(const DiscreteField& field, const NormSpec& spec);

double sup_in_time(std::span<const double> series);

/// Integral over the full r-box of a function sampled on one r-fiber.
double integrate_r(const GridSpec& grid, std::span<const double> fiber);

/// Integral over [r_first, r_max] of a fiber sampled on a single r-axis,
/// using the composite rule of the sub-range starting at node `first`.
double integrate_r(const GridSpec& grid, std::span<const double> fiber, std::size_t first);

/// Multilinear interpolation of nodal values at an (x, r) point. Logarithmic
/// axes interpolate linearly in log(coordinate). Empty outside the grid box.
std::optional<double> interpolate(const GridSpec& grid, std::span<const double> values,
                                  std::span<const double> point);

}  // namespace rlflow

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlflow/grid.hpp"

namespace rlflow {

using ParamMap = std::map<std::string, double>;

using B1Fn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
using B2Fn = std::function<void(double t, std::span<const double> x, std::span<const double> r,
                                std::span<double> out)>;
using DivXFn = std::function<double(double t, std::span<const double> x)>;
using DivRFn = std::function<double(double t, std::span<const double> x, std::span<const double> r)>;

/// Coefficient b = (b1(t, x), b2(t, x, r)) of the transport equation.
///
/// b1 never sees r, so the x-block of the flow cannot depend on r. Both
/// divergences are supplied in closed form; the solver never differentiates a
/// field numerically.
struct StructuredVectorField {
  std::string name;
  ParamMap params;
  std::size_t n = 0;
  std::size_t j = 0;
  B1Fn b1;
  B2Fn b2;
  DivXFn div_x_b1;
  DivRFn div_r_b2;
  /// Which summand of b = b_1 + b_2 (L^1 part plus L^inf part, after division
  /// by 1 + |x| + |r|) the field belongs to, when known.
  std::optional<std::string> growth_split;
  std::optional<double> lipschitz_hint;
  /// sup |b| over all of space, when finite and known.
  std::optional<double> speed_bound;
  bool autonomous = true;
  /// b2 does not depend on r.
  bool b2_r_independent = false;
  /// b2 is affine in r. Convolving such a b2 with the symmetric bump in r is
  /// the identity, so mollification only needs to smooth it in x.
  bool b2_affine_in_r = false;
  /// Coordinates along x-axis 0 where b is not smooth.
  std::vector<double> kinks;

  std::size_t dim() const { return n + j; }
};

struct Divergence {
  double div_x_b1 = 0.0;
  double div_r_b2 = 0.0;
  double total = 0.0;
};

/// Velocity (b1, b2) at a point (x, r) of dimension n + j.
void eval_field(const StructuredVectorField& field, double t, std::span<const double> point,
                std::span<double> out);
std::vector<double> eval_field(const StructuredVectorField& field, double t,
                               std::span<const double> point);

Divergence eval_divergence(const StructuredVectorField& field, double t,
                           std::span<const double> point);

struct FieldValidation {
  bool passed = true;
  double max_mismatch = 0.0;  ///< worst |analytic - central difference|
  double max_abs_divergence = 0.0;
  std::vector<std::string> failures;
};

/// Central-difference cross-check of the analytic divergences at every node of
/// `grid` and each of `times`. Non-finite divergences are reported as failures
/// of the bounded-divergence hypothesis.
FieldValidation validate_field(const StructuredVectorField& field, const GridSpec& grid,
                               std::span<const double> times, double h = 1e-5,
                               double tol = 1e-6);

/// Largest |analytic - central difference| over grid nodes at time t, step h.
double divergence_fd_error(const StructuredVectorField& field, const GridSpec& grid, double t,
                           double h);

// ---------------------------------------------------------------------------
// Built-in fields

StructuredVectorField zero_field(std::size_t n, std::size_t j);
/// b = (lambda x, mu r).
StructuredVectorField linear_field(double lambda, double mu, std::size_t n, std::size_t j);
/// b1(x) = sin(kx)/k on the real line, optionally with an r-block b2 = mu r.
StructuredVectorField oscillatory_field(double k, std::size_t j = 0, double mu = 0.0);
/// Divergence-free swirl in the x-plane: b1 = (2 x2, -2 x1) exp(-|x|^2).
StructuredVectorField swirl_field(std::size_t j = 0);
/// b1(x) = sign(x)|x|^alpha, 0 < alpha < 1: W^{1,1}_loc, not Lipschitz at 0.
StructuredVectorField sobolev_field(double alpha);
/// n = j = 1 shear: b1 = 0, b2(x, r) = c (1 + sin x) + mu r.
StructuredVectorField shear_smooth_field(double c, double mu = 0.0);
/// n = j = 1 shear with a Sobolev profile: b1 = 0, b2(x, r) = c |x|^alpha + mu r.
/// Non-Lipschitz in x at 0 with bounded divergence mu.
StructuredVectorField shear_sobolev_field(double c, double alpha, double mu = 0.0);

/// n = j = 1 dilation with a Sobolev profile: b1 = 0, b2(x, r) = c |x|^alpha r.
/// Keeps r > 0, div_r b2 = c |x|^alpha is bounded on bounded x-sets.
StructuredVectorField dilation_sobolev_field(double c, double alpha);

std::vector<std::string> field_catalogue();
/// Build a catalogue field by name; unknown names or parameters throw ConfigError.
StructuredVectorField make_field(const std::string& name, const ParamMap& params);

// ---------------------------------------------------------------------------
// Mollification

struct MollifierSpec {
  double epsilon = 0.1;
  /// Gauss-Legendre nodes per axis (per piece when the stencil straddles a kink).
  std::size_t nodes = 24;
};

/// Space-only convolution with the product bump exp(-1/(1-z^2)) of width
/// epsilon. b1 is smoothed in x alone, so the (B1) structure is preserved.
/// Divergences are derivatives of the smoothed field, evaluated by moving the
/// derivative onto the bump. Stencils straddling a declared kink are split
/// there so the result stays smooth in x.
StructuredVectorField mollify_field(const StructuredVectorField& field, const MollifierSpec& spec);

// ---------------------------------------------------------------------------
// Kernels

using KernelFn = std::function<double(double t, std::span<const double> x,
                                      std::span<const double> r, std::span<const double> rt)>;

enum class KernelSupport {
  full,
  /// gamma(.., r, rt) = 0 unless r < rt (single r-axis).
  lower_triangular,
};

struct Kernel {
  std::string name;
  ParamMap params;
  KernelFn gamma;
  /// Formula on the support, including its closure r == rt. Used by the
  /// quadrature of triangular kernels; defaults to gamma.
  KernelFn interior;
  KernelSupport support = KernelSupport::full;
  std::optional<double> singularity_exponent;
  bool identically_zero = false;

  double on_support(double t, std::span<const double> x, std::span<const double> r,
                    std::span<const double> rt) const {
    return interior ? interior(t, x, r, rt) : gamma(t, x, r, rt);
  }
};

/// kappa(r, rt) = 1/rt for 0 < r < rt, 0 otherwise.
double fragmentation_kernel(double r, double rt);

Kernel zero_kernel();
Kernel constant_kernel(double c);
/// scale * kappa(r, rt) * (1 + modulation * sin x0).
Kernel fragmentation(double scale, double modulation = 0.0);

std::vector<std::string> kernel_catalogue();
Kernel make_kernel(const std::string& name, const ParamMap& params);

/// Per-row r-tilde quadrature of the kernel integral on the label grid.
///
/// Full kernels integrate over the whole r-fiber; triangular kernels integrate
/// row i over nodes i..end with the composite rule of that sub-range, so the
/// jump of the kernel at r = rt falls on the end of the range.
class FiberQuadrature {
 public:
  FiberQuadrature(const GridSpec& grid, KernelSupport support);
  std::size_t first(std::size_t row) const { return triangular_ ? row : 0; }
  std::span<const double> weights(std::size_t row) const;
  bool triangular() const { return triangular_; }

 private:
  bool triangular_;
  std::vector<double> full_;
  std::vector<std::vector<double>> tails_;
};

/// Discretised sup_x int_{t_lo}^{t_hi} ( int_r ( int_rt |gamma|^{p'} )^{p/p'} dr )^{1/p} ds
/// on the grid, with the same r-quadrature used by the transport operator and
/// the trapezoid rule over the time nodes inside [t_lo, t_hi]. For p = 1 the
/// inner L^{p'} integral is replaced by the maximum over rt.
double kernel_slab_bound(const Kernel& kernel, const GridSpec& grid, double p, double t_lo,
                         double t_hi);

}  // namespace rlflow

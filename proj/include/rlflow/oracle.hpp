#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rlflow/fields.hpp"
#include "rlflow/grid.hpp"
#include "rlflow/transport.hpp"

namespace rlflow {

// ---------------------------------------------------------------------------
// Oscillatory family b_k(x) = sin(kx)/k

/// Position X(t, x) from tan(kX/2) = e^t tan(kx/2) on the branch containing x.
/// Negative t gives the inverse map.
double explicit_flow_position(double k, double t, double x);

/// dX/dx = F(t, kx) = e^t / (cos^2(kx/2) + e^{2t} sin^2(kx/2)).
double explicit_flow_derivative(double k, double t, double x);

/// F(t, z) itself.
double jacobian_profile(double t, double z);

/// (1/pi) int_0^pi F(t, z) dz by Gauss-Legendre quadrature; equal to 1.
/// The value does not depend on k (F(t, k.) is averaged over its own period).
double period_average(double k, double t, std::size_t panels = 64);

/// int_0^{2 pi} |F(t, z) - 1| dz by Gauss-Legendre quadrature split where F = 1.
/// This is the L^1(0, 2 pi) distance of the density rho_k(t) from 1 for any
/// integer k.
double density_l1_deviation(double t, std::size_t panels = 64);

// ---------------------------------------------------------------------------
// Separable kernels

using RFunction = std::function<double(std::span<const double> r)>;

/// gamma(r, rt) = sum_i a_i(r) c_i(rt), independent of t and x.
struct SeparableKernel {
  std::vector<RFunction> a;
  std::vector<RFunction> c;

  std::size_t terms() const { return a.size(); }
  void validate() const;
};

Kernel to_kernel(const SeparableKernel& kernel);

/// exp(M) for a small dense square matrix (row-major), by scaling and squaring
/// of the truncated Taylor series.
std::vector<double> matrix_exponential(std::span<const double> m, std::size_t size);

struct SeparableSolution {
  std::vector<double> alpha;  ///< per x-fiber, terms-major: alpha[ix * m + i]
  std::vector<double> B;      ///< m x m
  std::vector<double> times;
  std::vector<double> moments;  ///< times x x-fibers x m
  std::vector<double> values;   ///< times x nodes
};

/// b = 0 solution u~(t) = u0 + sum_i a_i m_i(t) with m' = alpha + B m, m(0) = 0,
/// alpha_i = <c_i, u0>, B_ij = <c_i, a_j>, inner products by integrate_r.
SeparableSolution separable_solve(const SeparableKernel& kernel, std::span<const double> u0, const GridSpec& grid,
                                  std::span<const double> times);

/// Fragmentation gamma = s/rt on r < rt with b = 0: a particle of size r0 has
/// after time t produced a cloud whose number is exp(s t); the returned factor
/// is the fraction of it still above r_min, with a = s t and L = log(r0/r_min).
/// Generation k carries Poisson(a) weight and lies below r_min with probability
/// P(Gamma(k, 1) > L) = P(Poisson(L) < k).
double fragmentation_retained_fraction(double a, double L);

// ---------------------------------------------------------------------------
// Closed-form inverse flows

/// X^{-1}(t, y) for catalogue fields with a closed-form flow (zero, linear,
/// oscillatory, shear_sobolev and dilation_sobolev without mollification).
std::optional<std::vector<double>> closed_form_inverse(const StructuredVectorField& field, double t,
                                                       std::span<const double> y);

/// u(t, y) = u0(X^{-1}(t, y)); throws DomainError for fields without a closed form.
double pure_transport_solution(const StructuredVectorField& field, const Sampler& u0, double t,
                               std::span<const double> y);

}  // namespace rlflow

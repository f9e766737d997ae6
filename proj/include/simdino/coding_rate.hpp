#pragma once

// Coding rate R_ε(Γ) = ½ logdet(I + (d/ε²) Γ) of a feature matrix Z (d×n,
// unit-norm columns), its analytic gradient, and the gradient-scale bound.
//
// Γ defaults to the uncentered second moment ZZᵀ/n. With that choice
// R = ½ logdet(I + α ZZᵀ), α = d/(n ε²), and
//
//     ∇_Z R = α (I + α ZZᵀ)⁻¹ Z,
//     ‖∇_Z R‖_F² = α² Σᵢ σᵢ²/(1 + α σᵢ²)² ≤ α r / 4,   r = min(d, n),
//
// so ‖∇_Z R‖_F ≤ √(d r / n) / (2ε). The often-quoted constant 1/(4ε) drops a
// factor of two in ∇ logdet(I + α ZZᵀ) = 2α(I + α ZZᵀ)⁻¹Z and does not hold:
// random unit-column matrices exceed it (see `simdino verify`).

#include <cstddef>
#include <vector>

#include "simdino/matrix.hpp"
#include "simdino/tensor.hpp"

namespace simdino {

struct CodingRateConfig {
  double eps = 0.5;
  /// Use the centered covariance instead of the raw second moment.
  bool use_centered = false;

  void validate() const;
};

/// Throws naming the worst column if any column norm differs from 1 by more than tol.
void check_unit_columns(const Matrix& z, double tol = 1e-8);

double coding_rate(const Matrix& z, const CodingRateConfig& cfg);
/// Differentiable version over graph tensors (same value as the Matrix overload).
Tensor coding_rate(const Tensor& z, const CodingRateConfig& cfg);
/// ½ logdet(I + (d/ε²)Γ) with no unit-norm precondition; used by finite differences.
double coding_rate_unchecked(const Matrix& z, const CodingRateConfig& cfg);

/// Closed-form ∇_Z R_ε for the uncentered estimate.
Matrix coding_rate_grad(const Matrix& z, const CodingRateConfig& cfg);

/// Certified bound √(d·min(d,n)/n)/(2ε) on ‖∇_Z R_ε‖_F over unit-column Z.
double grad_norm_bound(std::size_t d, std::size_t n, double eps);
/// The constant-1/4 variant, √(d·min(d,n)/n)/(4ε), reported for comparison only.
double quarter_constant_bound(std::size_t d, std::size_t n, double eps);
/// The certified multiplier of √(d·min(d,n)/n)/ε.
inline constexpr double kCertifiedGradConstant = 0.5;

struct SpectrumAssignment {
  std::size_t d = 0;
  std::size_t n = 0;
  double alpha = 0.0;
  std::vector<double> x;  // squared singular values, length r = min(d, n)

  std::size_t rank() const { return x.size(); }
  /// g(x) = Σ xᵢ/(1 + α xᵢ)².
  double objective() const;
  double lower() const { return static_cast<double>(rank() - 1) / (4.0 * alpha); }
  double upper() const { return static_cast<double>(rank()) / (4.0 * alpha); }
};

/// Largest ε² for which the extremal construction is feasible: max(d/n, d²/n²).
double extremal_eps_sq_threshold(std::size_t d, std::size_t n);
/// x₁ = … = x_{r−1} = 1/α, x_r = d − (r−1)/α. Throws if ε² exceeds the threshold.
SpectrumAssignment extremal_spectrum(std::size_t d, std::size_t n, double eps);

/// γ = c·ε·√(n/(d·min(d,n))): equalizes the orders of the alignment and coding-rate gradients.
double gamma_heuristic(double eps, std::size_t d, std::size_t n, double c = 1.0);

}  // namespace simdino

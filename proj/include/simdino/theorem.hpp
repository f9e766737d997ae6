#pragma once

// Numerical check of the coding-rate gradient scale: finite-difference
// validation of the closed-form gradient, random search for the largest
// ‖∇R_ε‖_F over unit-column matrices, and the extremal-spectrum sandwich.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "simdino/coding_rate.hpp"
#include "simdino/random.hpp"

namespace simdino {

/// d×n matrix of independent Gaussian columns scaled to unit norm.
Matrix random_unit_columns(std::size_t d, std::size_t n, Rng& rng);

/// ‖a − b‖_F / max(‖a‖_F, ‖b‖_F).
double relative_error(const Matrix& a, const Matrix& b);

/// Central differences of `coding_rate_unchecked` at z, step h.
Matrix coding_rate_grad_fd(const Matrix& z, const CodingRateConfig& cfg, double h = 1e-5);

struct GradNormSearch {
  double max_norm = 0.0;
  std::size_t argmax_trial = 0;
};

/// Max of ‖coding_rate_grad‖_F over `trials` random unit-column matrices.
/// Trial t draws from Rng(seed + t), so the result does not depend on scheduling.
namespace serial {
GradNormSearch max_grad_norm(std::size_t d, std::size_t n, double eps, std::size_t trials, std::uint64_t seed);
}
namespace parallel {
GradNormSearch max_grad_norm(std::size_t d, std::size_t n, double eps, std::size_t trials, std::uint64_t seed);
}

struct VerifyPoint {
  std::size_t d = 0, n = 0;
  double eps = 0.0;
  std::size_t trials = 0;
  double fd_rel_err = 0.0;   // worst over the finite-difference checks
  double empirical_max = 0.0;
  double bound = 0.0;        // certified, constant 1/2
  double ratio = 0.0;        // empirical_max / bound
  double quarter_bound = 0.0;
  double quarter_ratio = 0.0;
  double empirical_constant = 0.0;  // empirical_max · ε / √(d·min(d,n)/n)
  bool sandwich_applicable = false;
  double sandwich_value = 0.0, sandwich_lower = 0.0, sandwich_upper = 0.0;

  bool fd_ok(double tol = 1e-6) const { return fd_rel_err < tol; }
  bool bound_ok() const { return empirical_max <= bound; }
  bool sandwich_ok() const;
  bool ok() const { return fd_ok() && bound_ok() && sandwich_ok(); }
};

VerifyPoint verify_point(std::size_t d, std::size_t n, double eps, std::size_t trials, std::uint64_t seed,
                         std::size_t fd_checks = 3);

std::vector<VerifyPoint> verify_grid(const std::vector<std::size_t>& ds, const std::vector<std::size_t>& ns,
                                     const std::vector<double>& epss, std::size_t trials, std::uint64_t seed);

/// CSV with one row per grid point plus a trailing summary comment.
void write_verify_csv(std::ostream& os, const std::vector<VerifyPoint>& points);

}  // namespace simdino

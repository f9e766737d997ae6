#pragma once

// Dense SPD linear algebra on plain matrices. The differentiable wrappers live
// in tensor.hpp; these are the shared numerical cores.

#include "simdino/matrix.hpp"

namespace simdino::linalg {

/// Symmetric part (A + Aᵀ)/2. Throws if A is not square or if the asymmetry
/// exceeds `tolerance` (absolute, elementwise).
Matrix symmetrize(const Matrix& a, double tolerance = 1e-10);

/// Lower-triangular L with positive diagonal such that L·Lᵀ = sym(A).
/// Throws "not positive definite at pivot k" when a pivot is ≤ 0.
Matrix cholesky(const Matrix& a);

/// log det A = 2 Σ log L_ii.
double logdet_spd(const Matrix& a);
double logdet_from_cholesky(const Matrix& lower);

/// Solves L·Lᵀ·X = B given the factor.
Matrix cholesky_solve(const Matrix& lower, const Matrix& b);
Matrix spd_solve(const Matrix& a, const Matrix& b);

/// A⁻¹ from the Cholesky factor; only used for adjoints of small d×d systems.
Matrix spd_inverse_from_cholesky(const Matrix& lower);

}  // namespace simdino::linalg

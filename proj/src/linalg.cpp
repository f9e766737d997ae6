#include "simdino/linalg.hpp"

#include <cmath>

namespace simdino::linalg {

Matrix symmetrize(const Matrix& a, double tolerance) {
  if (a.rows != a.cols) throw Error("expected a square matrix, got " + shape_string(a.rows, a.cols));
  Matrix s(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) {
      const double x = a(i, j), y = a(j, i);
      if (std::abs(x - y) > tolerance * std::max(1.0, std::abs(x)))
        throw Error("matrix is not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      s(i, j) = 0.5 * (x + y);
    }
  return s;
}

Matrix cholesky(const Matrix& a) {
  const Matrix s = symmetrize(a);
  const std::size_t n = s.rows;
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = s(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (std::isnan(diag)) throw NonFiniteValue("cholesky: pivot " + std::to_string(j) + " is nan");
    if (!(diag > 0.0)) throw Error("not positive definite: pivot " + std::to_string(j) + " is " + std::to_string(diag));
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = s(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }
  return l;
}

double logdet_from_cholesky(const Matrix& lower) {
  double acc = 0.0;
  for (std::size_t i = 0; i < lower.rows; ++i) acc += std::log(lower(i, i));
  return 2.0 * acc;
}

double logdet_spd(const Matrix& a) { return logdet_from_cholesky(cholesky(a)); }

Matrix cholesky_solve(const Matrix& lower, const Matrix& b) {
  const std::size_t n = lower.rows;
  if (b.rows != n) throw Error("spd_solve: right-hand side " + shape_string(b.rows, b.cols) + " for system of size " + std::to_string(n));
  Matrix x = b;
  for (std::size_t c = 0; c < x.cols; ++c) {
    for (std::size_t i = 0; i < n; ++i) {  // L y = b
      double v = x(i, c);
      for (std::size_t k = 0; k < i; ++k) v -= lower(i, k) * x(k, c);
      x(i, c) = v / lower(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {  // Lᵀ x = y
      double v = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) v -= lower(k, ii) * x(k, c);
      x(ii, c) = v / lower(ii, ii);
    }
  }
  return x;
}

Matrix spd_solve(const Matrix& a, const Matrix& b) { return cholesky_solve(cholesky(a), b); }

Matrix spd_inverse_from_cholesky(const Matrix& lower) {
  Matrix inv = cholesky_solve(lower, Matrix::identity(lower.rows));
  for (std::size_t i = 0; i < inv.rows; ++i)
    for (std::size_t j = i + 1; j < inv.cols; ++j) {
      const double m = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = m;
      inv(j, i) = m;
    }
  return inv;
}

}  // namespace simdino::linalg

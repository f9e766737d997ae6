#include "simdino/coding_rate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "simdino/linalg.hpp"

namespace simdino {

void CodingRateConfig::validate() const {
  if (!(eps > 0.0)) throw Error("coding rate: eps must be positive, got " + std::to_string(eps));
}

void check_unit_columns(const Matrix& z, double tol) {
  double worst = 0.0, worst_norm = 1.0;
  std::size_t worst_col = 0;
  for (std::size_t c = 0; c < z.cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < z.rows; ++r) s += z(r, c) * z(r, c);
    const double norm = std::sqrt(s);
    if (std::abs(norm - 1.0) > worst) {
      worst = std::abs(norm - 1.0);
      worst_norm = norm;
      worst_col = c;
    }
  }
  if (worst > tol) {
    std::ostringstream os;
    os.precision(17);
    os << "feature columns must have unit norm; column " << worst_col << " has norm " << worst_norm;
    throw Error(os.str());
  }
}

namespace {

void check_shape(std::size_t d, std::size_t n) {
  if (d == 0 || n < 2) throw Error("coding rate needs d ≥ 1 and n ≥ 2 samples, got " + shape_string(d, n));
}

// Z − mean column; the centering operator is the constant (I − 11ᵀ/n).
Matrix centered(const Matrix& z) {
  Matrix c = z;
  for (std::size_t r = 0; r < z.rows; ++r) {
    double m = 0.0;
    for (std::size_t k = 0; k < z.cols; ++k) m += z(r, k);
    m /= static_cast<double>(z.cols);
    for (std::size_t k = 0; k < z.cols; ++k) c(r, k) -= m;
  }
  return c;
}

// I + (d/(n ε²)) Z Zᵀ
Matrix regularized_gram(const Matrix& z, double eps) {
  const std::size_t d = z.rows, n = z.cols;
  const double alpha = static_cast<double>(d) / (static_cast<double>(n) * eps * eps);
  Matrix g(d, d);
  kernels::matmul_nt(z.data, z.data, g.data, d, n, d);
  for (auto& v : g.data) v *= alpha;
  for (std::size_t i = 0; i < d; ++i) g(i, i) += 1.0;
  return g;
}

}  // namespace

double coding_rate_unchecked(const Matrix& z, const CodingRateConfig& cfg) {
  cfg.validate();
  check_shape(z.rows, z.cols);
  const Matrix& basis = cfg.use_centered ? centered(z) : z;
  return 0.5 * linalg::logdet_spd(regularized_gram(basis, cfg.eps));
}

double coding_rate(const Matrix& z, const CodingRateConfig& cfg) {
  check_unit_columns(z);
  return coding_rate_unchecked(z, cfg);
}

Tensor coding_rate(const Tensor& z, const CodingRateConfig& cfg) {
  cfg.validate();
  const std::size_t d = z.rows(), n = z.cols();
  check_shape(d, n);
  check_unit_columns(z.matrix());
  Tensor basis = z;
  if (cfg.use_centered) {
    Matrix proj = Matrix::identity(n);
    for (auto& v : proj.data) v -= 1.0 / static_cast<double>(n);
    basis = matmul(z, Tensor::constant(proj));
  }
  const double alpha = static_cast<double>(d) / (static_cast<double>(n) * cfg.eps * cfg.eps);
  Tensor gram = scale(matmul(basis, transpose(basis)), alpha);
  Tensor system = add(gram, Tensor::constant(Matrix::identity(d)));
  return scale(logdet_spd(system), 0.5);
}

Matrix coding_rate_grad(const Matrix& z, const CodingRateConfig& cfg) {
  cfg.validate();
  if (cfg.use_centered) throw Error("coding_rate_grad: closed form covers the uncentered estimate only");
  check_unit_columns(z);
  check_shape(z.rows, z.cols);
  const double alpha = static_cast<double>(z.rows) / (static_cast<double>(z.cols) * cfg.eps * cfg.eps);
  Matrix g = linalg::spd_solve(regularized_gram(z, cfg.eps), z);
  for (auto& v : g.data) v *= alpha;
  return g;
}

double grad_norm_bound(std::size_t d, std::size_t n, double eps) {
  const double r = static_cast<double>(std::min(d, n));
  return kCertifiedGradConstant * std::sqrt(static_cast<double>(d) * r / static_cast<double>(n)) / eps;
}

double quarter_constant_bound(std::size_t d, std::size_t n, double eps) {
  return 0.5 * grad_norm_bound(d, n, eps);
}

double SpectrumAssignment::objective() const {
  double g = 0.0;
  for (double v : x) g += v / ((1.0 + alpha * v) * (1.0 + alpha * v));
  return g;
}

double extremal_eps_sq_threshold(std::size_t d, std::size_t n) {
  const double dd = static_cast<double>(d), nn = static_cast<double>(n);
  return std::max(dd / nn, dd * dd / (nn * nn));
}

SpectrumAssignment extremal_spectrum(std::size_t d, std::size_t n, double eps) {
  if (d == 0 || n == 0 || !(eps > 0.0)) throw Error("extremal_spectrum: need d, n ≥ 1 and eps > 0");
  const double threshold = extremal_eps_sq_threshold(d, n);
  if (eps * eps > threshold) {
    std::ostringstream os;
    os << "extremal_spectrum: eps^2 = " << eps * eps << " exceeds max(d/n, d^2/n^2) = " << threshold;
    throw Error(os.str());
  }
  SpectrumAssignment s;
  s.d = d;
  s.n = n;
  s.alpha = static_cast<double>(d) / (static_cast<double>(n) * eps * eps);
  const std::size_t r = std::min(d, n);
  s.x.assign(r, 1.0 / s.alpha);
  s.x.back() = static_cast<double>(d) - static_cast<double>(r - 1) / s.alpha;
  return s;
}

double gamma_heuristic(double eps, std::size_t d, std::size_t n, double c) {
  const double r = static_cast<double>(std::min(d, n));
  return c * eps * std::sqrt(static_cast<double>(n) / (static_cast<double>(d) * r));
}

}  // namespace simdino

#include "simdino/matrix.hpp"

#include <cmath>

#include "simdino/kernels.hpp"

namespace simdino {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c)
    throw Error("Matrix: " + std::to_string(data.size()) + " values for shape " + shape_string(r, c));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
  return t;
}

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw Error("matmul: inner extents differ, " + shape_string(a.rows, a.cols) + " · " +
                shape_string(b.rows, b.cols));
  Matrix c(a.rows, b.cols);
  kernels::matmul_nn(a.data, b.data, c.data, a.rows, a.cols, b.cols);
  return c;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data) s += v * v;
  return std::sqrt(s);
}

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "×" + std::to_string(cols);
}

}  // namespace simdino

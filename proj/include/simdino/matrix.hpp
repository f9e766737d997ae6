#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace simdino {

/// Thrown for contract violations (bad shapes, out-of-range arguments, non-SPD input).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN or infinity reached a computation that cannot proceed with it.
class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

/// Plain row-major matrix of doubles. Parameters, gradients and feature tables
/// are stored this way; differentiable computation goes through Tensor.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  Matrix transposed() const;
  std::vector<double> column(std::size_t c) const;

  bool operator==(const Matrix&) const = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);
std::string shape_string(std::size_t rows, std::size_t cols);

}  // namespace simdino

#pragma once

// Test-side oracles: central finite differences over graph functions and
// Eigen conversions. Nothing here reuses the library's own gradient code.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "simdino/random.hpp"
#include "simdino/tensor.hpp"

namespace simdino::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data) v = scale * rng.normal();
  return m;
}

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) e(i, j) = m(i, j);
  return e;
}

inline Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = e(i, j);
  return m;
}

using GraphFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheck {
  double rel_err = 0.0;  // worst over inputs, Frobenius
  double max_abs = 0.0;
};

/// Reduces f's output with a fixed random weighting to a scalar, then compares
/// reverse-mode adjoints of every input with central differences of step h.
inline GradCheck check_gradients(const GraphFn& f, const std::vector<Matrix>& inputs, Rng& rng, double h = 1e-6) {
  std::vector<Tensor> leaves;
  for (const auto& m : inputs) leaves.push_back(Tensor::leaf(m));
  const Tensor probe = f(leaves);
  const Matrix weights = random_matrix(probe.rows(), probe.cols(), rng);
  auto scalar = [&](const std::vector<Tensor>& xs) { return sum(mul(f(xs), Tensor::constant(weights))); };
  backward(scalar(leaves));

  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto ad = leaves[k].grad();
    std::vector<double> fd(inputs[k].size());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto shifted = [&](double delta) {
        std::vector<Tensor> xs;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Matrix m = inputs[j];
          if (j == k) m.data[i] += delta;
          xs.push_back(Tensor::constant(m));
        }
        return scalar(xs).item();
      };
      fd[i] = (shifted(h) - shifted(-h)) / (2 * h);
    }
    double diff = 0.0, na = 0.0, nf = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      diff += (ad[i] - fd[i]) * (ad[i] - fd[i]);
      na += ad[i] * ad[i];
      nf += fd[i] * fd[i];
      out.max_abs = std::max(out.max_abs, std::abs(ad[i] - fd[i]));
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
    out.rel_err = std::max(out.rel_err, std::sqrt(diff) / denom);
  }
  return out;
}

}  // namespace simdino::testing

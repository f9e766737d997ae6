#pragma once

// Define-by-run reverse-mode differentiation over dense row-major tensors.
//
// A Tensor is a shared handle to an immutable node holding its value, its
// adjoint (filled by backward) and, for tracked results, the closure that
// pushes its adjoint into its inputs. A graph is whatever is reachable from
// the loss; it is built fresh every step and confined to one thread.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "simdino/kernels.hpp"
#include "simdino/matrix.hpp"

namespace simdino {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string to_string(const Shape& s);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  /// Untracked tensor; no adjoint flows into it.
  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor constant(const Matrix& m);
  /// Leaf that receives an adjoint from backward().
  static Tensor leaf(Shape shape, std::vector<double> values);
  static Tensor leaf(const Matrix& m);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;
  bool requires_grad() const;

  std::span<const double> data() const;
  double item() const;
  double at(std::size_t r, std::size_t c) const;
  Matrix matrix() const;

  /// Adjoint accumulated by the last backward() that reached this tensor
  /// (all zeros if it was not reached).
  std::span<const double> grad() const;
  Matrix grad_matrix() const;

  // Used by operation implementations.
  static Tensor make(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                     std::function<void(detail::Node&)> backward);
  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Runs reverse accumulation from a scalar loss. Adjoints of every reachable
/// node are reset first, so backward may be called repeatedly on one graph.
void backward(const Tensor& loss);

/// Copy of t that is a constant of the graph: nothing downstream reaches t.
Tensor stop_gradient(const Tensor& t);

// Matrix algebra (rank 2).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// a[m×n] + row[1×n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Elementwise.
Tensor gelu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// Row/column normalizations.
Tensor softmax_rows(const Tensor& a, double temperature = 1.0);
Tensor log_softmax_rows(const Tensor& a, double temperature = 1.0);
/// Row-wise layer normalization with learned gain/bias (each 1×n).
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-6);
/// Divides each column by its ℓ² norm. Throws on a column of norm ≤ 1e-12.
Tensor l2_normalize_columns(const Tensor& a);

// Indexing.
Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor concat_rows(std::span<const Tensor> parts);
/// Rows flagged in `indicator` are replaced by `token` (1×n); others come from `base`.
Tensor substitute_rows(const Tensor& base, std::span<const unsigned char> indicator, const Tensor& token);

// SPD algebra. Inputs are symmetrized as (A+Aᵀ)/2 before factorization.
Tensor cholesky(const Tensor& a);
Tensor logdet_spd(const Tensor& a);
Tensor spd_solve(const Tensor& a, const Tensor& b);

/// Multi-head self attention over `batch` independent sequences of `seq_len`
/// rows; qkv is (batch·seq_len)×(3·width) with width = heads·head_dim.
Tensor attention(const Tensor& qkv, std::size_t seq_len, std::size_t heads);

}  // namespace simdino

#include "simdino/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "simdino/linalg.hpp"

namespace simdino {

using detail::Node;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "×" : "") + std::to_string(s[i]);
  return out + "]";
}

namespace {

void check_values(const Shape& shape, const std::vector<double>& values) {
  for (auto e : shape)
    if (e == 0) throw Error("tensor extents must be positive, got " + to_string(shape));
  if (shape_numel(shape) != values.size())
    throw Error("tensor of shape " + to_string(shape) + " given " + std::to_string(values.size()) + " values");
}

void require_matrix(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(std::string(op) + ": undefined tensor");
  if (t.rank() != 2) throw Error(std::string(op) + ": expected a matrix, got shape " + to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw Error(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

// Adjoint buffer of input i, or nullptr when that input is not tracked.
double* target(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

const std::vector<double>& input(Node& self, std::size_t i) { return self.parents[i]->value; }

Shape mat(std::size_t r, std::size_t c) { return {r, c}; }

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  check_values(shape, values);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::constant(const Matrix& m) { return constant(mat(m.rows, m.cols), m.data); }

Tensor Tensor::leaf(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::leaf(const Matrix& m) { return leaf(mat(m.rows, m.cols), m.data); }

Tensor Tensor::zeros(Shape shape) {
  const auto n = shape_numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return constant(mat(1, 1), {v}); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return node_->shape.at(0); }
std::size_t Tensor::cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
std::span<const double> Tensor::data() const { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw Error("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

Matrix Tensor::matrix() const {
  if (rank() != 2) throw Error("matrix() on tensor of shape " + to_string(shape()));
  return Matrix(rows(), cols(), node_->value);
}

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

Matrix Tensor::grad_matrix() const {
  auto g = grad();
  return Matrix(rows(), cols(), std::vector<double>(g.begin(), g.end()));
}

Tensor Tensor::make(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                    std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  const bool tracked = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (auto& t : inputs) n->parents.push_back(t.node_);
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw Error("backward: loss must be a scalar, got shape " + (loss.defined() ? to_string(loss.shape()) : "[]"));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order with each node once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&loss.node(), 0}};
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad.assign(n->value.size(), 0.0);
  loss.node().grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

Tensor stop_gradient(const Tensor& t) { return Tensor::constant(t.shape(), {t.data().begin(), t.data().end()}); }

// ---------------------------------------------------------------------------
// Matrix algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw Error("matmul: inner extents differ, " + to_string(a.shape()) + " · " + to_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  kernels::matmul_nn(a.data(), b.data(), out, m, k, n);
  return Tensor::make(mat(m, n), std::move(out), {a, b}, [m, k, n](Node& self) {
    if (double* ga = target(self, 0))  // dA += G·Bᵀ
      kernels::matmul_nt(self.grad, input(self, 1), {ga, m * k}, m, n, k);
    if (double* gb = target(self, 1))  // dB += Aᵀ·G
      kernels::matmul_tn(input(self, 0), self.grad, {gb, k * n}, k, m, n);
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto v = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return Tensor::make(mat(c, r), std::move(out), {a}, [r, c](Node& self) {
    if (double* g = target(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = target(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = target(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = target(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = target(self, 0)) {
      const auto& bv = input(self, 1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = target(self, 1)) {
      const auto& av = input(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return Tensor::make(a.shape(), std::move(out), {a}, [s](Node& self) {
    if (double* g = target(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += s;
  return Tensor::make(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = target(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_matrix(a, "add_row");
  require_matrix(row, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.rows() != 1 || row.cols() != n)
    throw Error("add_row: row of shape " + to_string(row.shape()) + " for matrix " + to_string(a.shape()));
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += row.data()[j];
  return Tensor::make(a.shape(), std::move(out), {a, row}, [m, n](Node& self) {
    if (double* g = target(self, 0))
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
    if (double* g = target(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make(mat(1, 1), {s}, {a}, [](Node& self) {
    if (double* g = target(self, 0)) {
      const double up = self.grad[0];
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) g[i] += up;
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

// ---------------------------------------------------------------------------
// Elementwise

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
  return Tensor::make(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = target(self, 0)) {
      const auto& x = input(self, 0);
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
        g[i] += self.grad[i] * (cdf + x[i] * pdf);
      }
    }
  });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  return Tensor::make(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = target(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * self.value[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = a.data()[i];
    if (!(v > 0.0)) throw Error("log: non-positive entry " + std::to_string(v) + " at index " + std::to_string(i));
    out[i] = std::log(v);
  }
  return Tensor::make(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = target(self, 0)) {
      const auto& x = input(self, 0);
      for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] / x[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Normalizations

Tensor softmax_rows(const Tensor& a, double temperature) {
  require_matrix(a, "softmax_rows");
  if (!(temperature > 0.0)) throw Error("softmax_rows: temperature must be positive");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double* y = out.data() + i * n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j] / temperature);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (y[j] = std::exp(x[j] / temperature - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= total;
  }
  return Tensor::make(a.shape(), std::move(out), {a}, [m, n, temperature](Node& self) {
    if (double* g = target(self, 0))
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = self.value.data() + i * n;
        const double* gy = self.grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot) / temperature;
      }
  });
}

Tensor log_softmax_rows(const Tensor& a, double temperature) {
  require_matrix(a, "log_softmax_rows");
  if (!(temperature > 0.0)) throw Error("log_softmax_rows: temperature must be positive");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j] / temperature);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(x[j] / temperature - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[j] / temperature - lse;
  }
  return Tensor::make(a.shape(), std::move(out), {a}, [m, n, temperature](Node& self) {
    if (double* g = target(self, 0))
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = self.value.data() + i * n;
        const double* gy = self.grad.data() + i * n;
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += gy[j];
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += (gy[j] - std::exp(y[j]) * total) / temperature;
      }
  });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(a, "layer_norm");
  const std::size_t m = a.rows(), n = a.cols();
  if (gain.numel() != n || bias.numel() != n)
    throw Error("layer_norm: gain/bias of size " + std::to_string(gain.numel()) + " for width " + std::to_string(n));
  std::vector<double> normed(m * n), inv_std(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      normed[i * n + j] = (x[j] - mu) * inv_std[i];
      out[i * n + j] = normed[i * n + j] * gain.data()[j] + bias.data()[j];
    }
  }
  return Tensor::make(a.shape(), std::move(out), {a, gain, bias},
                      [m, n, normed = std::move(normed), inv_std = std::move(inv_std)](Node& self) {
                        const auto& gv = input(self, 1);
                        if (double* gg = target(self, 1))
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) gg[j] += self.grad[i * n + j] * normed[i * n + j];
                        if (double* gb = target(self, 2))
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
                        if (double* gx = target(self, 0))
                          for (std::size_t i = 0; i < m; ++i) {
                            double mean_d = 0.0, mean_dx = 0.0;
                            for (std::size_t j = 0; j < n; ++j) {
                              const double d = self.grad[i * n + j] * gv[j];
                              mean_d += d;
                              mean_dx += d * normed[i * n + j];
                            }
                            mean_d /= static_cast<double>(n);
                            mean_dx /= static_cast<double>(n);
                            for (std::size_t j = 0; j < n; ++j) {
                              const double d = self.grad[i * n + j] * gv[j];
                              gx[i * n + j] += inv_std[i] * (d - mean_d - normed[i * n + j] * mean_dx);
                            }
                          }
                      });
}

Tensor l2_normalize_columns(const Tensor& a) {
  require_matrix(a, "l2_normalize_columns");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> norms(n, 0.0), out(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) norms[j] += x[i * n + j] * x[i * n + j];
  for (std::size_t j = 0; j < n; ++j) {
    norms[j] = std::sqrt(norms[j]);
    if (!std::isfinite(norms[j]))
      throw NonFiniteValue("l2_normalize_columns: column " + std::to_string(j) + " has norm " + std::to_string(norms[j]));
    if (!(norms[j] > 1e-12))
      throw Error("l2_normalize_columns: column " + std::to_string(j) + " has norm " + std::to_string(norms[j]));
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] / norms[j];
  return Tensor::make(a.shape(), std::move(out), {a}, [m, n, norms = std::move(norms)](Node& self) {
    if (double* g = target(self, 0)) {
      std::vector<double> dots(n, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dots[j] += self.value[i * n + j] * self.grad[i * n + j];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          g[i * n + j] += (self.grad[i * n + j] - self.value[i * n + j] * dots[j]) / norms[j];
    }
  });
}

// ---------------------------------------------------------------------------
// Indexing

Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_matrix(a, "select_rows");
  const std::size_t n = a.cols();
  if (rows.empty()) throw Error("select_rows: empty selection");
  std::vector<double> out(rows.size() * n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= a.rows())
      throw Error("select_rows: row " + std::to_string(rows[r]) + " out of range for " + to_string(a.shape()));
    std::copy_n(a.data().data() + rows[r] * n, n, out.data() + r * n);
  }
  return Tensor::make(mat(rows.size(), n), std::move(out), {a},
                      [n, idx = std::vector<std::size_t>(rows.begin(), rows.end())](Node& self) {
                        if (double* g = target(self, 0))
                          for (std::size_t r = 0; r < idx.size(); ++r)
                            for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
                      });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != n) throw Error("concat_rows: column mismatch " + to_string(p.shape()) + " vs width " + std::to_string(n));
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * n);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return Tensor::make(mat(total, n), std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                      [offsets = std::move(offsets)](Node& self) {
                        for (std::size_t k = 0; k < offsets.size(); ++k)
                          if (double* g = target(self, k)) {
                            const std::size_t len = self.parents[k]->value.size();
                            for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offsets[k] + i];
                          }
                      });
}

Tensor substitute_rows(const Tensor& base, std::span<const unsigned char> indicator, const Tensor& token) {
  require_matrix(base, "substitute_rows");
  const std::size_t m = base.rows(), n = base.cols();
  if (indicator.size() != m) throw Error("substitute_rows: indicator length " + std::to_string(indicator.size()) + " for " + std::to_string(m) + " rows");
  if (token.numel() != n) throw Error("substitute_rows: token of size " + std::to_string(token.numel()) + " for width " + std::to_string(n));
  std::vector<double> out(base.data().begin(), base.data().end());
  for (std::size_t i = 0; i < m; ++i)
    if (indicator[i]) std::copy_n(token.data().data(), n, out.data() + i * n);
  return Tensor::make(base.shape(), std::move(out), {base, token},
                      [m, n, mask = std::vector<unsigned char>(indicator.begin(), indicator.end())](Node& self) {
                        double* gb = target(self, 0);
                        double* gt = target(self, 1);
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t j = 0; j < n; ++j) {
                            const double g = self.grad[i * n + j];
                            if (mask[i]) {
                              if (gt) gt[j] += g;
                            } else if (gb) {
                              gb[i * n + j] += g;
                            }
                          }
                      });
}

// ---------------------------------------------------------------------------
// SPD algebra

namespace {

void require_square(const Tensor& a, const char* op) {
  require_matrix(a, op);
  if (a.rows() != a.cols()) throw Error(std::string(op) + ": expected a square matrix, got " + to_string(a.shape()));
}

// Adds sym(m) = (m + mᵀ)/2 into g.
void accumulate_symmetric(double* g, const Matrix& m, double weight) {
  const std::size_t d = m.rows;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) g[i * d + j] += weight * 0.5 * (m(i, j) + m(j, i));
}

Matrix lower_inverse(const Matrix& l) {
  const std::size_t d = l.rows;
  Matrix inv(d, d);
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t i = c; i < d; ++i) {
      double v = (i == c) ? 1.0 : 0.0;
      for (std::size_t k = c; k < i; ++k) v -= l(i, k) * inv(k, c);
      inv(i, c) = v / l(i, i);
    }
  return inv;
}

}  // namespace

Tensor cholesky(const Tensor& a) {
  require_square(a, "cholesky");
  const std::size_t d = a.rows();
  Matrix l = linalg::cholesky(a.matrix());
  std::vector<double> out = l.data;
  return Tensor::make(mat(d, d), std::move(out), {a}, [d, l = std::move(l)](Node& self) {
    if (double* g = target(self, 0)) {
      // Ā = sym(L⁻ᵀ Φ(Lᵀ L̄) L⁻¹), Φ = lower triangle with halved diagonal.
      Matrix lbar(d, d, self.grad);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) lbar(i, j) = 0.0;
      Matrix phi = matmul(l.transposed(), lbar);
      for (std::size_t i = 0; i < d; ++i) {
        phi(i, i) *= 0.5;
        for (std::size_t j = i + 1; j < d; ++j) phi(i, j) = 0.0;
      }
      const Matrix linv = lower_inverse(l);
      accumulate_symmetric(g, matmul(matmul(linv.transposed(), phi), linv), 1.0);
    }
  });
}

Tensor logdet_spd(const Tensor& a) {
  require_square(a, "logdet_spd");
  const std::size_t d = a.rows();
  Matrix l = linalg::cholesky(a.matrix());
  const double value = linalg::logdet_from_cholesky(l);
  return Tensor::make(mat(1, 1), {value}, {a}, [d, l = std::move(l)](Node& self) {
    if (double* g = target(self, 0)) {
      const Matrix inv = linalg::spd_inverse_from_cholesky(l);
      for (std::size_t i = 0; i < d * d; ++i) g[i] += self.grad[0] * inv.data[i];
    }
  });
}

Tensor spd_solve(const Tensor& a, const Tensor& b) {
  require_square(a, "spd_solve");
  require_matrix(b, "spd_solve");
  const std::size_t d = a.rows(), n = b.cols();
  if (b.rows() != d) throw Error("spd_solve: right-hand side " + to_string(b.shape()) + " for system " + to_string(a.shape()));
  Matrix l = linalg::cholesky(a.matrix());
  Matrix x = linalg::cholesky_solve(l, b.matrix());
  std::vector<double> out = x.data;
  return Tensor::make(mat(d, n), std::move(out), {a, b}, [d, n, l = std::move(l)](Node& self) {
    // B̄ = A⁻¹G, Ā = −sym(B̄ Xᵀ)
    const Matrix bbar = linalg::cholesky_solve(l, Matrix(d, n, self.grad));
    if (double* gb = target(self, 1))
      for (std::size_t i = 0; i < d * n; ++i) gb[i] += bbar.data[i];
    if (double* ga = target(self, 0)) {
      const Matrix x(d, n, self.value);
      accumulate_symmetric(ga, matmul(bbar, x.transposed()), -1.0);
    }
  });
}

// ---------------------------------------------------------------------------
// Attention

Tensor attention(const Tensor& qkv, std::size_t seq_len, std::size_t heads) {
  require_matrix(qkv, "attention");
  if (seq_len == 0 || heads == 0 || qkv.rows() % seq_len != 0 || qkv.cols() % (3 * heads) != 0)
    throw Error("attention: qkv of shape " + to_string(qkv.shape()) + " incompatible with seq_len " +
                std::to_string(seq_len) + " and " + std::to_string(heads) + " heads");
  kernels::AttentionShape s{qkv.rows() / seq_len, seq_len, heads, qkv.cols() / (3 * heads)};
  std::vector<double> out(s.rows() * s.width());
  std::vector<double> probs(s.probs_size());
  kernels::attention_forward(qkv.data(), out, probs, s);
  return Tensor::make(mat(s.rows(), s.width()), std::move(out), {qkv}, [s, probs = std::move(probs)](Node& self) {
    if (double* g = target(self, 0))
      kernels::attention_backward(input(self, 0), probs, self.grad, {g, s.rows() * 3 * s.width()}, s);
  });
}

}  // namespace simdino

#pragma once

// Dense compute kernels. Every kernel exists twice: a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::parallel`. Work is split
// by output row, and each output element is accumulated in the same order in
// both versions, so the two produce bit-identical results for any thread count.

#include <cstddef>
#include <span>

namespace simdino::kernels {

/// Extents of one attention call: `batch` sequences of `seq_len` rows each,
/// `heads` heads of width `head_dim`. The qkv buffer has 3*heads*head_dim columns.
struct AttentionShape {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;

  std::size_t width() const { return heads * head_dim; }
  std::size_t rows() const { return batch * seq_len; }
  std::size_t probs_size() const { return batch * heads * seq_len * seq_len; }
};

namespace serial {
// c[m×n] += a[m×k] · b[k×n]
void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
// c[m×n] += a[m×k] · b[n×k]ᵀ
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
// c[m×n] += a[k×m]ᵀ · b[k×n]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);

// out[rows×width] = softmax(QKᵀ/√dh)·V per sequence and head; probs receives
// the attention weights, laid out [batch][head][query][key].
void attention_forward(std::span<const double> qkv, std::span<double> out, std::span<double> probs,
                       const AttentionShape& s);
// d_qkv += adjoint of attention_forward given d_out.
void attention_backward(std::span<const double> qkv, std::span<const double> probs,
                        std::span<const double> d_out, std::span<double> d_qkv,
                        const AttentionShape& s);
}  // namespace serial

namespace parallel {
void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void attention_forward(std::span<const double> qkv, std::span<double> out, std::span<double> probs,
                       const AttentionShape& s);
void attention_backward(std::span<const double> qkv, std::span<const double> probs,
                        std::span<const double> d_out, std::span<double> d_qkv,
                        const AttentionShape& s);
}  // namespace parallel

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

// Dispatching entry points used by the tensor engine.
using parallel::attention_backward;
using parallel::attention_forward;
using parallel::matmul_nn;
using parallel::matmul_nt;
using parallel::matmul_tn;

}  // namespace simdino::kernels

#include "simdino/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace simdino::kernels {

namespace {

constexpr std::size_t kParallelWork = 1 << 15;

// One (sequence, head) slice of attention. Rows of qkv are tokens; the head's
// query/key/value columns sit at offsets h*dh, E + h*dh, 2E + h*dh.
void attend_one(std::span<const double> qkv, std::span<double> out, std::span<double> probs,
                const AttentionShape& s, std::size_t b, std::size_t h) {
  const std::size_t T = s.seq_len, dh = s.head_dim, E = s.width(), stride = 3 * E;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* base = qkv.data() + b * T * stride;
  double* p = probs.data() + (b * s.heads + h) * T * T;
  for (std::size_t i = 0; i < T; ++i) {
    const double* q = base + i * stride + h * dh;
    double* prow = p + i * T;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < T; ++j) {
      const double* k = base + j * stride + E + h * dh;
      double dot = 0.0;
      for (std::size_t c = 0; c < dh; ++c) dot += q[c] * k[c];
      prow[j] = dot * scale;
      mx = std::max(mx, prow[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      prow[j] = std::exp(prow[j] - mx);
      total += prow[j];
    }
    for (std::size_t j = 0; j < T; ++j) prow[j] /= total;
    double* o = out.data() + (b * T + i) * E + h * dh;
    for (std::size_t c = 0; c < dh; ++c) o[c] = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      const double* v = base + j * stride + 2 * E + h * dh;
      for (std::size_t c = 0; c < dh; ++c) o[c] += prow[j] * v[c];
    }
  }
}

void attend_one_backward(std::span<const double> qkv, std::span<const double> probs,
                         std::span<const double> d_out, std::span<double> d_qkv,
                         const AttentionShape& s, std::size_t b, std::size_t h) {
  const std::size_t T = s.seq_len, dh = s.head_dim, E = s.width(), stride = 3 * E;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* base = qkv.data() + b * T * stride;
  double* dbase = d_qkv.data() + b * T * stride;
  const double* p = probs.data() + (b * s.heads + h) * T * T;
  std::vector<double> dp(T);
  for (std::size_t i = 0; i < T; ++i) {
    const double* go = d_out.data() + (b * T + i) * E + h * dh;
    const double* prow = p + i * T;
    // dV_j += p_ij * dO_i ; dP_ij = dO_i · V_j
    double weighted = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      const double* v = base + j * stride + 2 * E + h * dh;
      double* dv = dbase + j * stride + 2 * E + h * dh;
      double dot = 0.0;
      for (std::size_t c = 0; c < dh; ++c) {
        dv[c] += prow[j] * go[c];
        dot += go[c] * v[c];
      }
      dp[j] = dot;
      weighted += dot * prow[j];
    }
    const double* q = base + i * stride + h * dh;
    double* dq = dbase + i * stride + h * dh;
    for (std::size_t j = 0; j < T; ++j) {
      const double ds = prow[j] * (dp[j] - weighted) * scale;
      const double* k = base + j * stride + E + h * dh;
      double* dk = dbase + j * stride + E + h * dh;
      for (std::size_t c = 0; c < dh; ++c) {
        dq[c] += ds * k[c];
        dk[c] += ds * q[c];
      }
    }
  }
}

}  // namespace

namespace serial {

void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * b[p * n + j];
    }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] += acc;
    }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[p * m + i];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * b[p * n + j];
    }
}

void attention_forward(std::span<const double> qkv, std::span<double> out, std::span<double> probs,
                       const AttentionShape& s) {
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t h = 0; h < s.heads; ++h) attend_one(qkv, out, probs, s, b, h);
}

void attention_backward(std::span<const double> qkv, std::span<const double> probs,
                        std::span<const double> d_out, std::span<double> d_qkv,
                        const AttentionShape& s) {
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t h = 0; h < s.heads; ++h) attend_one_backward(qkv, probs, d_out, d_qkv, s, b, h);
}

}  // namespace serial

namespace parallel {

void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c.data() + i * n;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void attention_forward(std::span<const double> qkv, std::span<double> out, std::span<double> probs,
                       const AttentionShape& s) {
  const auto slices = static_cast<std::ptrdiff_t>(s.batch * s.heads);
#pragma omp parallel for schedule(static) if (slices > 1)
  for (std::ptrdiff_t bh = 0; bh < slices; ++bh)
    attend_one(qkv, out, probs, s, bh / s.heads, bh % s.heads);
}

void attention_backward(std::span<const double> qkv, std::span<const double> probs,
                        std::span<const double> d_out, std::span<double> d_qkv,
                        const AttentionShape& s) {
  const auto slices = static_cast<std::ptrdiff_t>(s.batch * s.heads);
#pragma omp parallel for schedule(static) if (slices > 1)
  for (std::ptrdiff_t bh = 0; bh < slices; ++bh)
    attend_one_backward(qkv, probs, d_out, d_qkv, s, bh / s.heads, bh % s.heads);
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace simdino::kernels

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "simdino/tensor.hpp"

using namespace simdino;
using simdino::testing::check_gradients;
using simdino::testing::random_matrix;

namespace {

constexpr double kTol = 1e-6;

Matrix spd_input(const Matrix& x) {
  Matrix a = matmul(x, x.transposed());
  for (std::size_t i = 0; i < a.rows; ++i) a(i, i) += static_cast<double>(a.rows);
  return a;
}

Matrix diagonal(std::size_t n, double v) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = v;
  return m;
}

Tensor make_spd(const Tensor& x) {
  const std::size_t n = x.rows();
  return add(matmul(x, transpose(x)), Tensor::constant(diagonal(n, static_cast<double>(n))));
}

}  // namespace

TEST(TensorGrad, MatrixAlgebra) {
  Rng rng(1);
  const auto a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng), c = random_matrix(3, 4, rng);
  EXPECT_LT(check_gradients([](auto& x) { return matmul(x[0], x[1]); }, {a, b}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return transpose(x[0]); }, {a}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return add(x[0], x[1]); }, {a, c}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return sub(x[0], x[1]); }, {a, c}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return mul(x[0], x[1]); }, {a, c}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return scale(add_scalar(x[0], 0.3), -1.7); }, {a}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return add_row(x[0], x[1]); }, {a, random_matrix(1, 4, rng)}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return mean(mul(x[0], x[0])); }, {a}, rng).rel_err, kTol);
}

TEST(TensorGrad, Elementwise) {
  Rng rng(2);
  const auto a = random_matrix(4, 5, rng);
  Matrix pos = a;
  for (auto& v : pos.data) v = 0.5 + std::abs(v);
  EXPECT_LT(check_gradients([](auto& x) { return gelu(x[0]); }, {a}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return exp(x[0]); }, {a}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return log(x[0]); }, {pos}, rng).rel_err, kTol);
}

TEST(TensorGrad, Normalizations) {
  Rng rng(3);
  const auto a = random_matrix(4, 6, rng);
  EXPECT_LT(check_gradients([](auto& x) { return softmax_rows(x[0], 0.7); }, {a}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return log_softmax_rows(x[0], 0.1); }, {a}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return layer_norm(x[0], x[1], x[2]); },
                            {a, random_matrix(1, 6, rng), random_matrix(1, 6, rng)}, rng)
                .rel_err,
            kTol);
  EXPECT_LT(check_gradients([](auto& x) { return l2_normalize_columns(x[0]); }, {a}, rng).rel_err, kTol);
}

TEST(TensorGrad, Indexing) {
  Rng rng(4);
  const auto a = random_matrix(5, 3, rng), b = random_matrix(2, 3, rng), tok = random_matrix(1, 3, rng);
  const std::vector<std::size_t> rows{4, 0, 0, 2};
  EXPECT_LT(check_gradients([&](auto& x) { return select_rows(x[0], rows); }, {a}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& x) { return concat_rows(x); }, {a, b}, rng).rel_err, kTol);
  const std::vector<unsigned char> mask{0, 1, 0, 1, 1};
  EXPECT_LT(check_gradients([&](auto& x) { return substitute_rows(x[0], mask, x[1]); }, {a, tok}, rng).rel_err, kTol);
}

TEST(TensorGrad, SpdAlgebra) {
  Rng rng(5);
  const auto x = random_matrix(4, 4, rng), rhs = random_matrix(4, 3, rng);
  EXPECT_LT(check_gradients([](auto& v) { return cholesky(make_spd(v[0])); }, {x}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& v) { return logdet_spd(make_spd(v[0])); }, {x}, rng).rel_err, kTol);
  EXPECT_LT(check_gradients([](auto& v) { return spd_solve(make_spd(v[0]), v[1]); }, {x, rhs}, rng).rel_err, kTol);
}

TEST(TensorGrad, Attention) {
  Rng rng(6);
  const auto qkv = random_matrix(2 * 5, 3 * 8, rng, 0.5);  // batch 2, 5 tokens, 2 heads of width 4
  EXPECT_LT(check_gradients([](auto& x) { return attention(x[0], 5, 2); }, {qkv}, rng).rel_err, kTol);
}

TEST(TensorValues, CholeskyMatchesEigen) {
  Rng rng(7);
  const Matrix a = spd_input(random_matrix(6, 6, rng));
  const Matrix l = cholesky(Tensor::constant(a)).matrix();
  const Eigen::MatrixXd ref = simdino::testing::to_eigen(a).llt().matrixL();
  EXPECT_LT((simdino::testing::to_eigen(l) - ref).norm(), 1e-12 * ref.norm());
  EXPECT_NEAR(logdet_spd(Tensor::constant(a)).item(), std::log(simdino::testing::to_eigen(a).determinant()), 1e-10);
}

TEST(TensorValues, SoftmaxRowsSumToOne) {
  Rng rng(8);
  const auto p = softmax_rows(Tensor::constant(random_matrix(3, 7, rng, 10.0)), 0.04).matrix();
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (double v : p.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(TensorGraph, BackwardIsRepeatableAndResets) {
  const Tensor x = Tensor::leaf({1, 2}, {1.0, 2.0});
  const Tensor loss = sum(mul(x, x));
  backward(loss);
  backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(TensorGraph, SharedSubexpressionAccumulates) {
  const Tensor x = Tensor::leaf({1, 1}, {3.0});
  const Tensor y = mul(x, x);
  backward(sum(add(y, y)));  // d(2x²)/dx = 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(TensorGraph, StopGradientBlocksAdjoint) {
  const Tensor x = Tensor::leaf({1, 2}, {1.0, -1.0});
  const Tensor y = stop_gradient(scale(x, 2.0));
  EXPECT_FALSE(y.requires_grad());
  backward(sum(add(mul(y, x), x)));  // only the direct paths reach x
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -1.0);
}

TEST(TensorErrors, Contracts) {
  const Tensor a = Tensor::constant(Matrix(2, 3, 1.0));
  EXPECT_THROW(matmul(a, a), Error);
  EXPECT_THROW(add(a, Tensor::constant(Matrix(3, 2))), Error);
  EXPECT_THROW(backward(a), Error);
  EXPECT_THROW(log(Tensor::constant(Matrix(1, 1, 0.0))), Error);
  EXPECT_THROW(Tensor::constant({2, 0}, {}), Error);
  EXPECT_THROW(cholesky(Tensor::constant(Matrix(2, 2, -1.0))), Error);
  Matrix z(2, 2, 1.0);
  z(0, 1) = z(1, 1) = 0.0;
  try {
    l2_normalize_columns(Tensor::constant(z));
    FAIL() << "zero column accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("column 1"), std::string::npos) << e.what();
  }
}

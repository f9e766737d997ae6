#include <gtest/gtest.h>

#include "oracles.hpp"
#include "simdino/linalg.hpp"

using namespace simdino;
using simdino::testing::random_matrix;
using simdino::testing::to_eigen;

namespace {
Matrix random_spd(std::size_t n, Rng& rng) {
  const Matrix x = random_matrix(n, n + 2, rng);
  Matrix a = matmul(x, x.transposed());
  for (std::size_t i = 0; i < n; ++i) a(i, i) += 0.1;
  return a;
}
}  // namespace

TEST(Linalg, CholeskyReconstructs) {
  Rng rng(21);
  const Matrix a = random_spd(7, rng);
  const Matrix l = linalg::cholesky(a);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_GT(l(i, i), 0.0);
    for (std::size_t j = i + 1; j < 7; ++j) EXPECT_EQ(l(i, j), 0.0);
  }
  EXPECT_LT((to_eigen(matmul(l, l.transposed())) - to_eigen(a)).norm(), 1e-12 * to_eigen(a).norm());
}

TEST(Linalg, LogdetAndSolveMatchEigen) {
  Rng rng(22);
  const Matrix a = random_spd(6, rng), b = random_matrix(6, 3, rng);
  const Eigen::MatrixXd ea = to_eigen(a);
  EXPECT_NEAR(linalg::logdet_spd(a), std::log(ea.determinant()), 1e-10);
  const Eigen::MatrixXd x = ea.ldlt().solve(to_eigen(b));
  EXPECT_LT((to_eigen(linalg::spd_solve(a, b)) - x).norm(), 1e-10 * x.norm());
  const Eigen::MatrixXd inv = ea.inverse();
  EXPECT_LT((to_eigen(linalg::spd_inverse_from_cholesky(linalg::cholesky(a))) - inv).norm(), 1e-10 * inv.norm());
}

TEST(Linalg, RejectsIndefiniteAndAsymmetric) {
  Matrix a = Matrix::identity(3);
  a(2, 2) = -1.0;
  try {
    linalg::cholesky(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("pivot 2"), std::string::npos) << e.what();
  }
  Matrix b = Matrix::identity(2);
  b(0, 1) = 0.5;
  EXPECT_THROW(linalg::symmetrize(b), Error);
  EXPECT_THROW(linalg::cholesky(Matrix(2, 3)), Error);
}

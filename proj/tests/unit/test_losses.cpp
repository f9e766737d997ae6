#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "simdino/losses.hpp"
#include "simdino/theorem.hpp"

using namespace simdino;
using simdino::testing::check_gradients;
using simdino::testing::random_matrix;
using simdino::testing::to_eigen;

namespace {

std::vector<double> random_simplex(std::size_t m, Rng& rng) {
  std::vector<double> p(m);
  double s = 0;
  for (auto& v : p) s += (v = std::exp(2.0 * rng.normal()));
  for (auto& v : p) v /= s;
  return p;
}

std::vector<double> softmax(std::span<const double> x, double t) {
  std::vector<double> p(x.size());
  double mx = -INFINITY, s = 0;
  for (double v : x) mx = std::max(mx, v / t);
  for (std::size_t i = 0; i < x.size(); ++i) s += (p[i] = std::exp(x[i] / t - mx));
  for (auto& v : p) v /= s;
  return p;
}

double eigen_rate(const Matrix& z, double eps) {
  const Eigen::MatrixXd e = to_eigen(z);
  const double d = static_cast<double>(z.rows), n = static_cast<double>(z.cols);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(z.rows, z.rows) + d / (n * eps * eps) * e * e.transpose();
  return 0.5 * std::log(a.determinant());
}

double mean_dot(const Matrix& a, const Matrix& b) { return (to_eigen(a).array() * to_eigen(b).array()).sum() / a.cols; }

}  // namespace

TEST(ScalarLosses, L2DistanceOnTheSphere) {
  Rng rng(61);
  const Matrix z = random_unit_columns(5, 2, rng);
  const auto x = z.column(0), y = z.column(1);
  double half_sq = 0;
  for (std::size_t i = 0; i < 5; ++i) half_sq += 0.5 * (x[i] - y[i]) * (x[i] - y[i]);
  EXPECT_NEAR(d_l2(x, y), half_sq, 1e-15);
  EXPECT_NEAR(d_l2(x, x), 0.0, 1e-15);
}

TEST(ScalarLosses, CrossEntropyDecomposition) {
  Rng rng(62);
  for (std::size_t m : {2u, 16u, 256u})
    for (int t = 0; t < 50; ++t) {
      const auto p = random_simplex(m, rng), q = random_simplex(m, rng);
      const auto dec = ce_decomposition(p, q);
      EXPECT_NEAR(d_ce(p, q), dec.d_js + dec.entropy_term, 1e-10);
      EXPECT_GE(dec.d_js, 0.0);
      EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-12);
    }
}

TEST(ScalarLosses, CrossEntropyZeroSupport) {
  const std::vector<double> p{0.5, 0.5, 0.0}, q{0.25, 0.75, 0.0}, r{1.0, 0.0, 0.0};
  EXPECT_NEAR(cross_entropy(p, q), -0.5 * std::log(0.25) - 0.5 * std::log(0.75), 1e-15);
  EXPECT_THROW(cross_entropy(p, r), Error);
  EXPECT_THROW(cross_entropy(p, std::vector<double>{1.0}), Error);
  EXPECT_NEAR(entropy(r), 0.0, 0.0);
}

TEST(Pairing, MultiCropPlan) {
  const auto plan = PairingPlan::multi_crop(2, 6);
  EXPECT_EQ(plan.pairs.size(), 10u);
  for (const auto& [s, t] : plan.pairs) EXPECT_NE(s, t);
  EXPECT_EQ(PairingPlan::multi_crop(2, 6, true).pairs.size(), 12u);
  EXPECT_THROW(PairingPlan::multi_crop(1, 1), Error);
}

TEST(SimDinoLoss, MatchesHandComputation) {
  Rng rng(63);
  const std::size_t d = 4, B = 6;
  std::vector<Matrix> s, t;
  for (int v = 0; v < 3; ++v) s.push_back(random_unit_columns(d, B, rng));
  for (int v = 0; v < 2; ++v) t.push_back(random_unit_columns(d, B, rng));
  std::vector<Tensor> st, tt;
  for (const auto& m : s) st.push_back(Tensor::constant(m));
  for (const auto& m : t) tt.push_back(Tensor::constant(m));
  LossConfig cfg;
  cfg.gamma = 0.3;
  const auto plan = PairingPlan::multi_crop(2, 3);
  const auto out = simdino_loss(st, tt, plan, 2, cfg);
  // pairs (0,1) (1,0) (2,0) (2,1)
  const double dist = 1.0 - 0.25 * (mean_dot(s[0], t[1]) + mean_dot(s[1], t[0]) + mean_dot(s[2], t[0]) + mean_dot(s[2], t[1]));
  const double rate = 0.5 * (eigen_rate(s[0], cfg.eps) + eigen_rate(s[1], cfg.eps));
  EXPECT_NEAR(out.distance, dist, 1e-13);
  EXPECT_NEAR(out.coding_rate, rate, 1e-11);
  EXPECT_NEAR(out.total.item(), dist - 0.3 * rate, 1e-11);
}

TEST(SimDinoLoss, StudentAdjointsMatchDifferences) {
  Rng rng(64);
  std::vector<Matrix> inputs;
  for (int v = 0; v < 3; ++v) inputs.push_back(random_matrix(5, 4, rng));
  std::vector<Tensor> teacher;
  for (int v = 0; v < 2; ++v) teacher.push_back(Tensor::constant(random_unit_columns(5, 4, rng)));
  LossConfig cfg;
  cfg.gamma = 0.7;
  const auto plan = PairingPlan::multi_crop(2, 3);
  const auto err = check_gradients(
      [&](const std::vector<Tensor>& raw) {
        std::vector<Tensor> s;
        for (const auto& r : raw) s.push_back(l2_normalize_columns(r));
        return simdino_loss(s, teacher, plan, 2, cfg).total;
      },
      inputs, rng);
  EXPECT_LT(err.rel_err, 1e-6);
}

TEST(SimDinoLoss, RejectsTrackedTeacherAndTinyBatch) {
  Rng rng(65);
  const auto z = random_unit_columns(3, 4, rng);
  const std::vector<Tensor> s{Tensor::constant(z), Tensor::constant(z)};
  const std::vector<Tensor> tracked{Tensor::leaf(z), Tensor::leaf(z)};
  const auto plan = PairingPlan::multi_crop(2, 2);
  EXPECT_THROW(simdino_loss(s, tracked, plan, 2, {}), Error);
  const auto one = random_unit_columns(3, 1, rng);
  const std::vector<Tensor> s1{Tensor::constant(one), Tensor::constant(one)};
  EXPECT_THROW(simdino_loss(s1, s1, plan, 2, {}), Error);
  LossConfig bad;
  bad.gamma = -0.1;
  EXPECT_THROW(simdino_loss(s, s, plan, 2, bad), Error);
}

TEST(SimDinoLoss, GradientDoesNotReachTeacherSource) {
  Rng rng(66);
  const Tensor shared = Tensor::leaf(random_matrix(3, 4, rng));
  const Tensor student = l2_normalize_columns(shared);
  const Tensor teacher = stop_gradient(student);
  const std::vector<Tensor> s{student, student}, t{teacher, teacher};
  backward(simdino_loss(s, t, PairingPlan::multi_crop(2, 2), 2, LossConfig{.gamma = 0.0}).total);
  // With γ = 0 and teacher = student, ∂/∂s (1 − sᵀt) = −t, which projects to zero on the sphere.
  for (double g : shared.grad()) EXPECT_NEAR(g, 0.0, 1e-14);
}

TEST(PatchLoss, IndicatorSumOracle) {
  Rng rng(67);
  const std::size_t d = 4, cols = 12;
  const Matrix s = random_unit_columns(d, cols, rng), t = random_unit_columns(d, cols, rng);
  std::vector<unsigned char> mask(cols);
  for (auto& m : mask) m = rng.uniform() < 0.4;
  double ref = 0;
  for (std::size_t c = 0; c < cols; ++c)
    if (mask[c]) ref += d_l2(s.column(c), t.column(c));
  ref /= cols;
  EXPECT_NEAR(masked_patch_distance(Tensor::constant(s), Tensor::constant(t), mask).item(), ref, 1e-14);
  EXPECT_EQ(masked_patch_distance(Tensor::constant(s), Tensor::constant(t), std::vector<unsigned char>(cols, 0)).item(), 0.0);
  EXPECT_THROW(masked_patch_distance(Tensor::constant(s), Tensor::constant(t), std::vector<unsigned char>(3)), Error);
}

TEST(PatchLoss, SimDinoV2CombinesTerms) {
  Rng rng(68);
  const std::size_t d = 4, B = 3, N = 4;
  std::vector<Tensor> sc, tc, sp, tp;
  std::vector<std::vector<unsigned char>> masks;
  for (int g = 0; g < 2; ++g) {
    sc.push_back(Tensor::constant(random_unit_columns(d, B, rng)));
    tc.push_back(Tensor::constant(random_unit_columns(d, B, rng)));
    sp.push_back(Tensor::constant(random_unit_columns(d, B * N, rng)));
    tp.push_back(Tensor::constant(random_unit_columns(d, B * N, rng)));
    std::vector<unsigned char> m(B * N);
    for (auto& x : m) x = rng.uniform() < 0.5;
    masks.push_back(m);
  }
  LossConfig cfg;
  cfg.gamma = 0.2;
  const auto plan = PairingPlan::multi_crop(2, 2);
  const auto v2 = simdinov2_loss(sc, tc, sp, tp, masks, plan, 2, cfg);
  const auto v1 = simdino_loss(sc, tc, plan, 2, cfg);
  const double patch = 0.5 * (masked_patch_distance(sp[0], tp[0], masks[0]).item() +
                              masked_patch_distance(sp[1], tp[1], masks[1]).item());
  EXPECT_NEAR(v2.patch_distance, patch, 1e-14);
  EXPECT_NEAR(v2.cls_distance, v1.distance, 1e-14);
  EXPECT_NEAR(v2.total.item(), 0.5 * (v1.distance + patch) - 0.2 * v1.coding_rate, 1e-12);
}

TEST(DinoHead, SoftmaxOfNormalizedPrototypes) {
  Rng rng(69);
  const Matrix protos = random_matrix(7, 4, rng, 2.0);
  const auto z = random_unit_columns(4, 1, rng).column(0);
  const auto p = dino_head(z, protos, 0.1);
  std::vector<double> logits(7);
  for (std::size_t k = 0; k < 7; ++k) {
    double n = 0, dot = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      n += protos(k, j) * protos(k, j);
      dot += protos(k, j) * z[j];
    }
    logits[k] = dot / std::sqrt(n);
  }
  const auto ref = softmax(logits, 0.1);
  for (std::size_t k = 0; k < 7; ++k) EXPECT_NEAR(p[k], ref[k], 1e-14);
  // A constant center leaves the distribution unchanged.
  const std::vector<double> shift(7, 0.3);
  const auto shifted = dino_head(z, protos, 0.1, shift);
  for (std::size_t k = 0; k < 7; ++k) EXPECT_NEAR(shifted[k], p[k], 1e-14);
  EXPECT_THROW(dino_head(z, protos, 0.0), Error);
}

TEST(DinoHead, CenterRecursion) {
  CenterState c{{1.0, -1.0}, 0.9, false};
  Matrix logits(2, 2);
  logits(0, 0) = 2.0;
  logits(1, 0) = 4.0;
  logits(0, 1) = logits(1, 1) = 0.5;
  for (int k = 1; k <= 5; ++k) {
    c = update_center(c, logits);
    const double w = std::pow(0.9, k);
    EXPECT_NEAR(c.center[0], w * 1.0 + (1 - w) * 3.0, 1e-14);
    EXPECT_NEAR(c.center[1], w * -1.0 + (1 - w) * 0.5, 1e-14);
  }
  CenterState frozen{{0.0, 0.0}, 0.9, true};
  EXPECT_EQ(update_center(frozen, logits).center, frozen.center);
}

TEST(DinoLoss, MatchesScalarCrossEntropy) {
  Rng rng(70);
  const std::size_t B = 3, m = 5;
  const Matrix sl = random_matrix(B, m, rng), tl = random_matrix(B, m, rng);
  const CenterState center{{0.1, -0.2, 0.0, 0.3, 0.05}, 0.9, false};
  LossConfig cfg;
  const std::vector<Tensor> s{Tensor::constant(sl), Tensor::constant(sl)};
  const std::vector<Matrix> t{tl, tl};
  const auto out = dino_loss(s, t, center, PairingPlan::multi_crop(2, 2), cfg);
  double ref = 0;
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> shifted(tl.row(b).begin(), tl.row(b).end());
    for (std::size_t k = 0; k < m; ++k) shifted[k] -= center.center[k];
    ref += d_ce(softmax(sl.row(b), cfg.student_temp), softmax(shifted, cfg.teacher_temp));
  }
  EXPECT_NEAR(out.total.item(), ref / B, 1e-12);
}

TEST(DinoLoss, StudentAdjointsMatchDifferences) {
  Rng rng(71);
  const std::vector<Matrix> teacher{random_matrix(4, 6, rng)};
  const CenterState center{std::vector<double>(6, 0.0), 0.9, false};
  PairingPlan plan;
  plan.pairs = {{0, 0}, {1, 0}};
  const auto err = check_gradients(
      [&](const std::vector<Tensor>& s) { return dino_loss(s, teacher, center, plan, LossConfig{}).total; },
      {random_matrix(4, 6, rng), random_matrix(4, 6, rng)}, rng);
  EXPECT_LT(err.rel_err, 1e-6);
}

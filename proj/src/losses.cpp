#include "simdino/losses.hpp"

#include <cmath>

namespace simdino {

const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::SimDino: return "simdino";
    case LossMode::SimDinoV2: return "simdinov2";
    case LossMode::DinoBaseline: return "dino-baseline";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "simdino") return LossMode::SimDino;
  if (s == "simdinov2") return LossMode::SimDinoV2;
  if (s == "dino-baseline" || s == "dino_baseline") return LossMode::DinoBaseline;
  throw Error("unknown loss mode '" + s + "'");
}

void LossConfig::validate() const {
  if (!(gamma >= 0.0)) throw Error("gamma must be ≥ 0, got " + std::to_string(gamma));
  if (!(eps > 0.0)) throw Error("eps must be > 0");
  if (!(student_temp > 0.0 && teacher_temp > 0.0)) throw Error("temperatures must be > 0");
  if (!(center_decay >= 0.0 && center_decay <= 1.0)) throw Error("center decay must lie in [0, 1]");
  if (!(mask_sample_prob >= 0.0 && mask_sample_prob <= 1.0)) throw Error("mask sample probability must lie in [0, 1]");
  if (!(mask_ratio_min >= 0.0 && mask_ratio_min <= mask_ratio_max && mask_ratio_max <= 1.0))
    throw Error("mask ratio range must satisfy 0 ≤ min ≤ max ≤ 1");
}

// --- scalar forms -------------------------------------------------------------

namespace {
void same_length(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw Error("distributions must be non-empty and of equal length");
}
}  // namespace

double d_l2(std::span<const double> x, std::span<const double> y) {
  same_length(x, y);
  double dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
  return 1.0 - dot;
}

double cross_entropy(std::span<const double> p, std::span<const double> q) {
  same_length(p, q);
  double ce = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (!(q[i] > 0.0)) throw Error("cross entropy: q[" + std::to_string(i) + "] = 0 where p > 0 (log of zero)");
    ce -= p[i] * std::log(q[i]);
  }
  return ce;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) { return cross_entropy(p, q) - entropy(p); }

double d_ce(std::span<const double> p, std::span<const double> q) {
  return 0.5 * (cross_entropy(p, q) + cross_entropy(q, p));
}

CeDecomposition ce_decomposition(std::span<const double> p, std::span<const double> q) {
  // KL is accumulated termwise as Σ p log(p/q) rather than CE − H, so the two
  // routes to d_CE share no intermediate.
  double kl_pq = 0.0, kl_qp = 0.0;
  same_length(p, q);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      if (!(q[i] > 0.0)) throw Error("cross entropy: q[" + std::to_string(i) + "] = 0 where p > 0 (log of zero)");
      kl_pq += p[i] * std::log(p[i] / q[i]);
    }
    if (q[i] > 0.0) {
      if (!(p[i] > 0.0)) throw Error("cross entropy: p[" + std::to_string(i) + "] = 0 where q > 0 (log of zero)");
      kl_qp += q[i] * std::log(q[i] / p[i]);
    }
  }
  return {0.5 * (kl_pq + kl_qp), 0.5 * (entropy(p) + entropy(q))};
}

// --- batched graph forms ----------------------------------------------------------

PairingPlan PairingPlan::multi_crop(std::size_t global_count, std::size_t total_views, bool include_same_view) {
  PairingPlan plan;
  for (std::size_t s = 0; s < total_views; ++s)
    for (std::size_t t = 0; t < global_count; ++t)
      if (include_same_view || s != t) plan.pairs.emplace_back(s, t);
  if (plan.pairs.empty()) throw Error("pairing plan is empty; use at least two views");
  return plan;
}

Tensor mean_l2_distance(const Tensor& student, const Tensor& teacher) {
  if (student.shape() != teacher.shape())
    throw Error("feature shapes differ: " + to_string(student.shape()) + " vs " + to_string(teacher.shape()));
  const double b = static_cast<double>(student.cols());
  return add_scalar(scale(sum(mul(student, teacher)), -1.0 / b), 1.0);
}

namespace {

void check_views(std::span<const Tensor> student_cls, std::span<const Tensor> teacher_cls, const PairingPlan& plan,
                 std::size_t global_count) {
  if (teacher_cls.size() != global_count || student_cls.size() < global_count)
    throw Error("expected " + std::to_string(global_count) + " teacher views and at least as many student views");
  for (const auto& [s, t] : plan.pairs)
    if (s >= student_cls.size() || t >= teacher_cls.size()) throw Error("pairing plan refers to a missing view");
  for (const auto& t : teacher_cls)
    if (t.requires_grad()) throw Error("teacher features must be detached (stop_gradient) before the loss");
  if (student_cls.front().cols() < 2) throw Error("batch size must be at least 2 to estimate the covariance");
}

Tensor cls_alignment(std::span<const Tensor> student_cls, std::span<const Tensor> teacher_cls, const PairingPlan& plan) {
  std::vector<Tensor> terms;
  for (const auto& [s, t] : plan.pairs) terms.push_back(mean_l2_distance(student_cls[s], teacher_cls[t]));
  return scale(sum(concat_rows(terms)), 1.0 / static_cast<double>(terms.size()));
}

Tensor mean_coding_rate(std::span<const Tensor> student_cls, std::size_t global_count, const LossConfig& cfg) {
  const CodingRateConfig cr{cfg.eps, cfg.centered_covariance};
  std::vector<Tensor> rates;
  for (std::size_t g = 0; g < global_count; ++g) rates.push_back(coding_rate(student_cls[g], cr));
  return scale(sum(concat_rows(rates)), 1.0 / static_cast<double>(global_count));
}

}  // namespace

LossTerms simdino_loss(std::span<const Tensor> student_cls, std::span<const Tensor> teacher_cls,
                       const PairingPlan& plan, std::size_t global_count, const LossConfig& cfg) {
  cfg.validate();
  check_views(student_cls, teacher_cls, plan, global_count);
  const Tensor distance = cls_alignment(student_cls, teacher_cls, plan);
  const Tensor rate = mean_coding_rate(student_cls, global_count, cfg);
  LossTerms out;
  out.total = sub(distance, scale(rate, cfg.gamma));
  out.distance = out.cls_distance = distance.item();
  out.coding_rate = rate.item();
  return out;
}

Tensor masked_patch_distance(const Tensor& student_patches, const Tensor& teacher_patches,
                             std::span<const unsigned char> mask) {
  if (student_patches.shape() != teacher_patches.shape())
    throw Error("patch features misaligned: " + to_string(student_patches.shape()) + " vs " +
                to_string(teacher_patches.shape()));
  const std::size_t d = student_patches.rows(), cols = student_patches.cols();
  if (mask.size() != cols)
    throw Error("mask of length " + std::to_string(mask.size()) + " for " + std::to_string(cols) + " patches");
  Matrix weights(d, cols);
  double masked = 0.0;
  for (std::size_t c = 0; c < cols; ++c)
    if (mask[c]) {
      masked += 1.0;
      for (std::size_t r = 0; r < d; ++r) weights(r, c) = 1.0;
    }
  // Σ_masked (1 − sᵀt) / cols
  const Tensor dots = sum(mul(mul(student_patches, teacher_patches), Tensor::constant(weights)));
  return scale(add_scalar(scale(dots, -1.0), masked), 1.0 / static_cast<double>(cols));
}

LossTerms simdinov2_loss(std::span<const Tensor> student_cls, std::span<const Tensor> teacher_cls,
                         std::span<const Tensor> student_patches, std::span<const Tensor> teacher_patches,
                         std::span<const std::vector<unsigned char>> masks, const PairingPlan& plan,
                         std::size_t global_count, const LossConfig& cfg) {
  cfg.validate();
  check_views(student_cls, teacher_cls, plan, global_count);
  if (student_patches.size() != global_count || teacher_patches.size() != global_count || masks.size() != global_count)
    throw Error("simdinov2: patch features and masks are required for every global view");
  for (const auto& t : teacher_patches)
    if (t.requires_grad()) throw Error("teacher features must be detached (stop_gradient) before the loss");

  const Tensor cls = cls_alignment(student_cls, teacher_cls, plan);
  std::vector<Tensor> patch_terms;
  for (std::size_t g = 0; g < global_count; ++g)
    patch_terms.push_back(masked_patch_distance(student_patches[g], teacher_patches[g], masks[g]));
  const Tensor patch = scale(sum(concat_rows(patch_terms)), 1.0 / static_cast<double>(global_count));
  const Tensor rate = mean_coding_rate(student_cls, global_count, cfg);

  LossTerms out;
  const Tensor alignment = scale(add(cls, patch), 0.5);
  out.total = sub(alignment, scale(rate, cfg.gamma));
  out.distance = alignment.item();
  out.cls_distance = cls.item();
  out.patch_distance = patch.item();
  out.coding_rate = rate.item();
  return out;
}

// --- DINO baseline -----------------------------------------------------------------

std::vector<double> dino_head(std::span<const double> z, const Matrix& prototypes, double temperature,
                              std::span<const double> center) {
  if (!(temperature > 0.0)) throw Error("temperature must be positive");
  if (prototypes.cols != z.size()) throw Error("prototype width does not match feature dimension");
  if (!center.empty() && center.size() != prototypes.rows) throw Error("center length does not match prototype count");
  const std::size_t m = prototypes.rows;
  std::vector<double> logits(m);
  double mx = -INFINITY;
  for (std::size_t k = 0; k < m; ++k) {
    double norm = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      norm += prototypes(k, j) * prototypes(k, j);
      dot += prototypes(k, j) * z[j];
    }
    logits[k] = (dot / std::sqrt(norm) - (center.empty() ? 0.0 : center[k])) / temperature;
    mx = std::max(mx, logits[k]);
  }
  double total = 0.0;
  for (auto& v : logits) total += (v = std::exp(v - mx));
  for (auto& v : logits) v /= total;
  return logits;
}

CenterState update_center(const CenterState& state, const Matrix& logits) {
  if (logits.rows == 0) throw Error("update_center: empty batch");
  if (logits.cols != state.center.size()) throw Error("update_center: logits width does not match center");
  CenterState next = state;
  if (state.frozen) return next;
  for (std::size_t k = 0; k < logits.cols; ++k) {
    double m = 0.0;
    for (std::size_t b = 0; b < logits.rows; ++b) m += logits(b, k);
    m /= static_cast<double>(logits.rows);
    next.center[k] = state.decay * state.center[k] + (1.0 - state.decay) * m;
  }
  return next;
}

LossTerms dino_loss(std::span<const Tensor> student_logits, std::span<const Matrix> teacher_logits,
                    const CenterState& center, const PairingPlan& plan, const LossConfig& cfg) {
  cfg.validate();
  // Teacher probabilities and their logs are graph constants.
  std::vector<Tensor> teacher_p, teacher_logp;
  for (const auto& logits : teacher_logits) {
    Matrix shifted = logits;
    for (std::size_t b = 0; b < shifted.rows; ++b)
      for (std::size_t k = 0; k < shifted.cols; ++k) shifted(b, k) -= center.center.at(k);
    const Tensor c = Tensor::constant(shifted);
    teacher_p.push_back(stop_gradient(softmax_rows(c, cfg.teacher_temp)));
    teacher_logp.push_back(stop_gradient(log_softmax_rows(c, cfg.teacher_temp)));
  }
  std::vector<Tensor> student_p, student_logp;
  for (const auto& s : student_logits) {
    student_p.push_back(softmax_rows(s, cfg.student_temp));
    student_logp.push_back(log_softmax_rows(s, cfg.student_temp));
  }
  std::vector<Tensor> terms;
  for (const auto& [s, t] : plan.pairs) {
    if (s >= student_logits.size() || t >= teacher_logits.size()) throw Error("pairing plan refers to a missing view");
    const double b = static_cast<double>(student_logits[s].rows());
    // ½(CE(p_s, p_t) + CE(p_t, p_s)) averaged over the batch
    const Tensor both = add(sum(mul(student_p[s], teacher_logp[t])), sum(mul(teacher_p[t], student_logp[s])));
    terms.push_back(scale(both, -0.5 / b));
  }
  const Tensor ce = scale(sum(concat_rows(terms)), 1.0 / static_cast<double>(terms.size()));
  LossTerms out;
  out.total = ce;
  out.distance = out.cls_distance = ce.item();
  return out;
}

}  // namespace simdino

#pragma once

// Training objectives.
//
//   simdino:    E[d_ℓ²(z_s, z_t)] − γ·R_ε(Γ(student global features))
//   simdinov2:  ½·(cls alignment + masked patch alignment) − γ·R_ε(...)
//   dino:       E[d_CE(p_s, p_t)] with prototype head, teacher centering and temperature
//
// d_ℓ²(x, y) = ½‖x − y‖² = 1 − xᵀy on the sphere. Teacher inputs are expected
// to be constants of the graph (see stop_gradient); nothing here differentiates
// through them.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "simdino/coding_rate.hpp"
#include "simdino/tensor.hpp"

namespace simdino {

enum class LossMode { SimDino, SimDinoV2, DinoBaseline };
const char* to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

struct LossConfig {
  LossMode mode = LossMode::SimDino;
  double gamma = 0.1;
  double eps = 0.5;
  bool centered_covariance = false;
  // Baseline head.
  double student_temp = 0.1;
  double teacher_temp = 0.04;
  double center_decay = 0.9;
  std::size_t prototypes = 256;
  // SimDINOv2 masking.
  double mask_sample_prob = 0.5;
  double mask_ratio_min = 0.1;
  double mask_ratio_max = 0.5;

  void validate() const;
};

// --- scalar reference forms ------------------------------------------------

double d_l2(std::span<const double> x, std::span<const double> y);
/// Σ p log(1/q); throws when q_i = 0 with p_i > 0.
double cross_entropy(std::span<const double> p, std::span<const double> q);
double entropy(std::span<const double> p);
double kl_divergence(std::span<const double> p, std::span<const double> q);
/// ½(CE(p, q) + CE(q, p)).
double d_ce(std::span<const double> p, std::span<const double> q);

struct CeDecomposition {
  double d_js = 0.0;          // ½(KL(p‖q) + KL(q‖p))
  double entropy_term = 0.0;  // ½(H(p) + H(q))
};
CeDecomposition ce_decomposition(std::span<const double> p, std::span<const double> q);

// --- batched graph forms ---------------------------------------------------

/// Pairs (student view index, teacher view index) over which the alignment
/// term is averaged. Teacher views are the first `global_count` student views.
struct PairingPlan {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  /// Every student view against every teacher global view, skipping identical
  /// crops unless `include_same_view`.
  static PairingPlan multi_crop(std::size_t global_count, std::size_t total_views, bool include_same_view = false);
};

/// Mean over columns of 1 − sᵀt for feature matrices d×B.
Tensor mean_l2_distance(const Tensor& student, const Tensor& teacher);

struct LossTerms {
  Tensor total;
  double distance = 0.0;     // alignment term (cls, plus patches in v2)
  double cls_distance = 0.0;
  double patch_distance = 0.0;
  double coding_rate = 0.0;  // mean R_ε over student global views
};

/// student_cls[v] is d×B for view v; teacher_cls[g] is d×B for global view g.
LossTerms simdino_loss(std::span<const Tensor> student_cls, std::span<const Tensor> teacher_cls,
                       const PairingPlan& plan, std::size_t global_count, const LossConfig& cfg);

/// Masked patch alignment for one (student global view, same-crop teacher view)
/// pair: (1/(B·N)) Σ_b Σ_i 1[mask_bi]·(1 − s_bi ᵀ t_bi). Patch matrices are d×(B·N).
Tensor masked_patch_distance(const Tensor& student_patches, const Tensor& teacher_patches,
                             std::span<const unsigned char> mask);

/// student_patches[g] / masks[g] belong to student global view g, which is the
/// same crop as teacher global view g.
LossTerms simdinov2_loss(std::span<const Tensor> student_cls, std::span<const Tensor> teacher_cls,
                         std::span<const Tensor> student_patches, std::span<const Tensor> teacher_patches,
                         std::span<const std::vector<unsigned char>> masks, const PairingPlan& plan,
                         std::size_t global_count, const LossConfig& cfg);

// --- DINO baseline ----------------------------------------------------------

struct CenterState {
  std::vector<double> center;  // length m
  double decay = 0.9;
  bool frozen = false;
};

/// softmax((W z − μ)/τ) with W row-normalized prototypes (m×d), z a unit d-vector.
std::vector<double> dino_head(std::span<const double> z, const Matrix& prototypes, double temperature,
                              std::span<const double> center = {});

/// μ ← ν μ + (1 − ν)·(mean row of logits). Logits are B×m pre-softmax teacher outputs.
CenterState update_center(const CenterState& state, const Matrix& logits);

/// Symmetric cross-entropy between student probabilities (from logits) and
/// teacher probabilities (constants), averaged over the plan and batch.
/// student_logits[v] and teacher_logits[g] are B×m.
LossTerms dino_loss(std::span<const Tensor> student_logits, std::span<const Matrix> teacher_logits,
                    const CenterState& center, const PairingPlan& plan, const LossConfig& cfg);

}  // namespace simdino

#pragma once

// Self-distillation training: view sampling, teacher and student forwards,
// the per-mode objective, AdamW, teacher EMA and checkpoints.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "simdino/data.hpp"
#include "simdino/encoder.hpp"
#include "simdino/losses.hpp"
#include "simdino/optim.hpp"
#include "simdino/views.hpp"

namespace simdino {

enum class TrainMode { SimDino, SimDinoV2, DinoBaseline, NoDistill };
const char* to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::SimDino;
  EncoderConfig encoder;
  MultiCropConfig views;
  LossConfig loss;
  bool include_same_view = false;

  std::size_t batch_size = 32;
  std::size_t steps = 100;
  double lr = 0.002;
  double lr_end = 1e-6;
  std::size_t warmup_steps = 10;
  double weight_decay = 0.04;
  double weight_decay_end = 0.4;
  double momentum = 0.996;      // initial teacher EMA λ, cosine to momentum_end
  double momentum_end = 1.0;
  double clip = 3.0;            // global gradient norm, ≤ 0 disables
  double layer_decay = 1.0;     // 1 disables layerwise lr decay
  double teacher_temp_warmup_start = 0.04;
  std::size_t teacher_temp_warmup_steps = 0;
  bool center_frozen = false;   // baseline: keep μ at 0

  /// When set, γ = gamma_scale·‖∂distance/∂Z‖/‖∂R/∂Z‖ measured on the first
  /// batch (Z = student global class features) and then frozen; otherwise loss.gamma.
  bool calibrate_gamma = true;
  double gamma_scale = 1.0;

  std::uint64_t seed = 0;

  void validate() const;
  /// Encoder config with the prototype layer sized for the mode.
  EncoderConfig effective_encoder() const;
};

/// θ_t ← λ θ_t + (1 − λ) θ_s elementwise.
EncoderParams ema_update(const EncoderParams& teacher, const EncoderParams& student, double lambda);

struct TrainState {
  EncoderParams student, teacher;
  AdamState adam;
  std::size_t step = 0;  // steps completed
  Rng rng;
  CenterState center;
  double gamma = 0.0;
  bool gamma_ready = false;
};

TrainState init_train_state(const TrainConfig& cfg);

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0.0, distance = 0.0, coding_rate = 0.0, grad_norm = 0.0, eff_rank = 0.0;
  double lambda = 0.0, lr = 0.0, weight_decay = 0.0, gamma = 0.0, teacher_temp = 0.0;
  double cls_distance = 0.0, patch_distance = 0.0;
  std::size_t masked_patches = 0;

  bool operator==(const StepMetrics&) const = default;
};

/// Everything needed to recompute the masked patch term of one step from scratch.
struct PatchAudit {
  std::vector<Matrix> student_patches, teacher_patches;  // per global view, d×(B·N)
  std::vector<std::vector<unsigned char>> masks;
  double reported = 0.0;
};

/// Raised when the loss or a gradient stops being finite.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t step, const std::string& quantity);
  std::size_t step;
  std::string quantity;
};

/// One optimization step on the given image indices.
StepMetrics train_step(TrainState& state, const Dataset& ds, std::span<const std::size_t> batch, const TrainConfig& cfg,
                       PatchAudit* audit = nullptr);

/// Batch of distinct training-split indices drawn from the state's generator.
std::vector<std::size_t> draw_batch(TrainState& state, const Dataset& ds, std::size_t batch_size);

struct RunOptions {
  std::string checkpoint_dir;        // empty: no checkpoints
  std::size_t checkpoint_every = 0;  // 0: only the final one
  std::uint64_t config_hash = 0;
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(const PatchAudit&)> on_audit;  // v2 only
};

struct RunResult {
  TrainState state;
  std::vector<StepMetrics> metrics;
};

/// Runs from `start` (a fresh state when empty) until cfg.steps steps are done.
RunResult run_training(const TrainConfig& cfg, const Dataset& ds, const RunOptions& opts = {},
                       std::optional<TrainState> start = std::nullopt);

// Checkpoints: magic, format version, config hash, scalar state, then named
// parameter blocks (name, rows, cols, f64 payload), all little-endian.
std::string serialize_checkpoint(const TrainState& state, std::uint64_t config_hash);
TrainState deserialize_checkpoint(const std::string& bytes, std::uint64_t expected_hash, const std::string& what);
void save_checkpoint(const std::string& path, const TrainState& state, std::uint64_t config_hash);
TrainState load_checkpoint(const std::string& path, std::uint64_t expected_hash);
/// Config hash stored in a checkpoint, without loading the rest.
std::uint64_t checkpoint_config_hash(const std::string& path);

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const StepMetrics& m);

}  // namespace simdino

#pragma once

// Schedules, global-norm clipping and the AdamW update over encoder parameters.

#include <cstddef>
#include <functional>
#include <string>

#include "simdino/encoder.hpp"

namespace simdino {

enum class ScheduleKind { Constant, WarmupCosine, Cosine };
const char* to_string(ScheduleKind k);
ScheduleKind parse_schedule_kind(const std::string& s);

struct Schedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double start = 0.0;
  double end = 0.0;
  std::size_t warmup = 0;
  std::size_t total = 0;

  void validate() const;
  bool operator==(const Schedule&) const = default;
};

/// Linear ramp 0 → start over `warmup` steps (WarmupCosine only), then half-cosine
/// start → end reaching `end` at `total`. Steps past `total` are clamped and
/// reported through `clamped`.
double schedule_value(const Schedule& s, std::size_t step, bool* clamped = nullptr);

/// Rescales all gradients so their joint Frobenius norm is at most max_norm
/// (max_norm ≤ 0 disables clipping). Returns the norm before clipping.
double clip_global_norm(EncoderParams& grads, double max_norm);
double global_norm(const EncoderParams& grads);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  EncoderParams m, v;
  std::size_t t = 0;
};

AdamState init_adam(const EncoderParams& params);

/// Weight decay applies to projection weights and prototypes, not to biases,
/// norms, tokens or positional tables.
bool decays(const std::string& name);

/// θ ← θ(1 − s·decay) − s·lr·m̂/(√v̂ + eps) with s = lr_scale(name) (1 when
/// empty). The moments never see the decay term; pass decay = lr·wd for the
/// usual coupling of the two schedules.
void adamw_step(EncoderParams& params, const EncoderParams& grads, AdamState& state, double lr, double decay,
                const AdamConfig& cfg = {}, const std::function<double(const std::string&)>& lr_scale = {});

}  // namespace simdino

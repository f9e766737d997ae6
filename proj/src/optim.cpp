#include "simdino/optim.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace simdino {

const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::WarmupCosine: return "warmup_cosine";
    case ScheduleKind::Cosine: return "cosine";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "constant") return ScheduleKind::Constant;
  if (s == "warmup_cosine") return ScheduleKind::WarmupCosine;
  if (s == "cosine") return ScheduleKind::Cosine;
  throw Error("unknown schedule kind '" + s + "' (constant | warmup_cosine | cosine)");
}

void Schedule::validate() const {
  if (!std::isfinite(start) || !std::isfinite(end)) throw Error("schedule endpoints must be finite");
  if (warmup > total) throw Error("schedule warmup " + std::to_string(warmup) + " exceeds total " + std::to_string(total));
}

double schedule_value(const Schedule& s, std::size_t step, bool* clamped) {
  if (clamped) *clamped = step > s.total;
  if (step > s.total) step = s.total;
  switch (s.kind) {
    case ScheduleKind::Constant: return s.start;
    case ScheduleKind::WarmupCosine:
      if (step < s.warmup) return s.start * static_cast<double>(step) / static_cast<double>(s.warmup);
      [[fallthrough]];
    case ScheduleKind::Cosine: {
      const std::size_t from = s.kind == ScheduleKind::Cosine ? 0 : s.warmup;
      const std::size_t span = s.total - from;
      if (span == 0) return s.end;
      const double u = static_cast<double>(step - from) / static_cast<double>(span);
      return s.end + 0.5 * (s.start - s.end) * (1.0 + std::cos(std::numbers::pi * u));
    }
  }
  return s.start;
}

double global_norm(const EncoderParams& grads) {
  double sq = 0.0;
  grads.visit([&](const std::string&, const Matrix& g) {
    for (double v : g.data) sq += v * v;
  });
  return std::sqrt(sq);
}

double clip_global_norm(EncoderParams& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / (norm + 1e-6);
    grads.visit([&](const std::string&, Matrix& g) {
      for (double& v : g.data) v *= f;
    });
  }
  return norm;
}

AdamState init_adam(const EncoderParams& params) {
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  return s;
}

bool decays(const std::string& name) {
  return name == "prototypes" || (name.size() > 2 && name.compare(name.size() - 2, 2, "_w") == 0);
}

void adamw_step(EncoderParams& params, const EncoderParams& grads, AdamState& state, double lr, double decay,
                const AdamConfig& cfg, const std::function<double(const std::string&)>& lr_scale) {
  check_same_shapes(params, grads);
  check_same_shapes(params, state.m);
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  std::vector<const Matrix*> g;
  std::vector<Matrix*> mm, vv;
  grads.visit([&](const std::string&, const Matrix& x) { g.push_back(&x); });
  state.m.visit([&](const std::string&, Matrix& x) { mm.push_back(&x); });
  state.v.visit([&](const std::string&, Matrix& x) { vv.push_back(&x); });
  std::size_t k = 0;
  params.visit([&](const std::string& name, Matrix& p) {
    const Matrix& gk = *g[k];
    Matrix& mk = *mm[k];
    Matrix& vk = *vv[k];
    ++k;
    const double s = lr_scale ? lr_scale(name) : 1.0;
    const double shrink = decays(name) ? 1.0 - s * decay : 1.0;
    const double step = s * lr;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double gi = gk.data[i];
      mk.data[i] = cfg.beta1 * mk.data[i] + (1.0 - cfg.beta1) * gi;
      vk.data[i] = cfg.beta2 * vk.data[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = mk.data[i] / bc1, vhat = vk.data[i] / bc2;
      p.data[i] = p.data[i] * shrink - step * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  });
}

}  // namespace simdino

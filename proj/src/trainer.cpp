#include "simdino/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "simdino/binary_io.hpp"
#include "simdino/coding_rate.hpp"
#include "simdino/eval.hpp"

namespace simdino {

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::SimDino: return "simdino";
    case TrainMode::SimDinoV2: return "simdinov2";
    case TrainMode::DinoBaseline: return "dino-baseline";
    case TrainMode::NoDistill: return "no-distill";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "simdino") return TrainMode::SimDino;
  if (s == "simdinov2") return TrainMode::SimDinoV2;
  if (s == "dino-baseline" || s == "dino_baseline") return TrainMode::DinoBaseline;
  if (s == "no-distill" || s == "no_distill") return TrainMode::NoDistill;
  throw Error("unknown mode '" + s + "' (simdino | simdinov2 | dino-baseline | no-distill)");
}

void TrainConfig::validate() const {
  effective_encoder().validate();
  views.validate();
  loss.validate();
  if (encoder.patch_dim % (views.patch * views.patch) != 0)
    throw Error("patch_dim " + std::to_string(encoder.patch_dim) + " is not a multiple of patch² = " +
                std::to_string(views.patch * views.patch));
  if (batch_size < 2) throw Error("batch_size must be at least 2 (covariance needs two samples)");
  if (!(lr >= 0.0 && lr_end >= 0.0)) throw Error("learning rates must be ≥ 0");
  if (!(weight_decay >= 0.0 && weight_decay_end >= 0.0)) throw Error("weight decay must be ≥ 0");
  if (!(momentum >= 0.0 && momentum <= 1.0 && momentum_end >= 0.0 && momentum_end <= 1.0))
    throw Error("EMA momentum must lie in [0, 1]");
  if (!(layer_decay > 0.0 && layer_decay <= 1.0)) throw Error("layer_decay must lie in (0, 1]");
  if (!(teacher_temp_warmup_start > 0.0)) throw Error("teacher temperature must be positive");
  if (!(gamma_scale >= 0.0)) throw Error("gamma_scale must be ≥ 0");
  if (views.global_count + views.local_count < 2) throw Error("need at least two views per image");
}

EncoderConfig TrainConfig::effective_encoder() const {
  EncoderConfig e = encoder;
  e.prototypes = mode == TrainMode::DinoBaseline ? loss.prototypes : 0;
  return e;
}

EncoderParams ema_update(const EncoderParams& teacher, const EncoderParams& student, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("EMA λ must lie in [0, 1]");
  check_same_shapes(teacher, student);
  EncoderParams out = teacher;
  std::vector<const Matrix*> src;
  student.visit([&](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t k = 0;
  out.visit([&](const std::string&, Matrix& t) {
    const Matrix& s = *src[k++];
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = lambda * t.data[i] + (1.0 - lambda) * s.data[i];
  });
  return out;
}

TrainState init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  Rng init(cfg.seed);
  s.student = init_encoder(cfg.effective_encoder(), init);
  s.teacher = s.student;
  s.adam = init_adam(s.student);
  s.rng = init.split();
  if (cfg.mode == TrainMode::DinoBaseline) {
    s.center.center.assign(cfg.loss.prototypes, 0.0);
    s.center.decay = cfg.loss.center_decay;
    s.center.frozen = cfg.center_frozen;
  }
  s.gamma = cfg.calibrate_gamma ? 0.0 : cfg.loss.gamma;
  s.gamma_ready = !cfg.calibrate_gamma || cfg.mode == TrainMode::DinoBaseline;
  return s;
}

TrainingDiverged::TrainingDiverged(std::size_t step_, const std::string& quantity_)
    : Error("training diverged at step " + std::to_string(step_) + ": non-finite " + quantity_),
      step(step_),
      quantity(quantity_) {}

namespace {

struct Schedules {
  double lr, wd, lambda, teacher_temp;
};

Schedules schedules_at(const TrainConfig& cfg, std::size_t step) {
  const std::size_t total = cfg.steps;
  const std::size_t warmup = std::min(cfg.warmup_steps, total);
  Schedules s;
  s.lr = schedule_value({ScheduleKind::WarmupCosine, cfg.lr, cfg.lr_end, warmup, total}, step);
  s.wd = schedule_value({ScheduleKind::Cosine, cfg.weight_decay, cfg.weight_decay_end, 0, total}, step);
  s.lambda = schedule_value({ScheduleKind::Cosine, cfg.momentum, cfg.momentum_end, 0, total}, step);
  if (step < cfg.teacher_temp_warmup_steps) {
    const double u = static_cast<double>(step) / static_cast<double>(cfg.teacher_temp_warmup_steps);
    s.teacher_temp = cfg.teacher_temp_warmup_start + u * (cfg.loss.teacher_temp - cfg.teacher_temp_warmup_start);
  } else {
    s.teacher_temp = cfg.loss.teacher_temp;
  }
  return s;
}

// Learning-rate multiplier for layerwise decay: the head gets 1, block i gets
// decay^(depth − i), the embedding parameters decay^(depth + 1).
std::function<double(const std::string&)> layer_scales(const TrainConfig& cfg) {
  if (cfg.layer_decay == 1.0) return {};
  const double decay = cfg.layer_decay;
  const auto depth = static_cast<double>(cfg.encoder.depth);
  return [decay, depth](const std::string& name) {
    if (name.rfind("blocks.", 0) == 0) {
      const double i = std::stod(name.substr(7, name.find('.', 7) - 7));
      return std::pow(decay, depth - i);
    }
    if (name == "patch_w" || name == "patch_b" || name == "cls_token" || name == "pos_table" || name == "mask_token")
      return std::pow(decay, depth + 1.0);
    return 1.0;
  };
}

void check_finite(const EncoderParams& grads, std::size_t step) {
  grads.visit([&](const std::string& name, const Matrix& g) {
    for (double v : g.data)
      if (!std::isfinite(v)) throw TrainingDiverged(step, "gradient of " + name);
  });
}

Matrix hstack(std::span<const Tensor> parts) {
  std::size_t cols = 0;
  for (const auto& p : parts) cols += p.cols();
  Matrix out(parts.front().rows(), cols);
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < p.rows(); ++r)
      for (std::size_t c = 0; c < p.cols(); ++c) out(r, c0 + c) = p.at(r, c);
    c0 += p.cols();
  }
  return out;
}

}  // namespace

std::vector<std::size_t> draw_batch(TrainState& state, const Dataset& ds, std::size_t batch_size) {
  auto pool = ds.indices(Split::Train);
  if (batch_size > pool.size())
    throw Error("batch size " + std::to_string(batch_size) + " exceeds the " + std::to_string(pool.size()) + " training images");
  for (std::size_t i = 0; i < batch_size; ++i) std::swap(pool[i], pool[i + state.rng.below(pool.size() - i)]);
  pool.resize(batch_size);
  return pool;
}

namespace {

StepMetrics step_impl(TrainState& state, const Dataset& ds, std::span<const std::size_t> batch, const TrainConfig& cfg,
                      PatchAudit* audit) {
  if (batch.size() < 2) throw Error("train_step: batch size must be at least 2");
  const std::size_t G = cfg.views.global_count, V = G + cfg.views.local_count, B = batch.size();
  const std::size_t step = state.step;
  const bool v2 = cfg.mode == TrainMode::SimDinoV2;
  const bool baseline = cfg.mode == TrainMode::DinoBaseline;
  const EncoderConfig enc = cfg.effective_encoder();
  const Schedules sched = schedules_at(cfg, step);

  // Views, in image order; the student copy of a global view may be masked.
  std::vector<std::vector<PatchSequence>> student_views(V), teacher_views(G);
  const std::vector<double> mask_token = state.student.mask_token.data;
  for (std::size_t idx : batch) {
    if (idx >= ds.size()) throw Error("train_step: image index " + std::to_string(idx) + " out of range");
    const Image& img = ds.images[idx];
    for (double v : img.pixels)
      if (!std::isfinite(v)) throw Error("train_step: image " + std::to_string(idx) + " has a non-finite pixel");
    const auto specs = sample_views(img, cfg.views, state.rng);
    for (std::size_t v = 0; v < V; ++v) {
      PatchSequence seq = apply_view(img, specs[v], cfg.views.patch);
      if (v < G) {
        teacher_views[v].push_back(seq);
        if (v2 && state.rng.uniform() < cfg.loss.mask_sample_prob) {
          const double ratio = state.rng.uniform(cfg.loss.mask_ratio_min, cfg.loss.mask_ratio_max);
          seq = apply_mask(seq, ratio, mask_token, state.rng);
        }
      }
      student_views[v].push_back(std::move(seq));
    }
  }

  // Teacher forward; every output is a graph constant.
  const EncoderTensors wt = bind(cfg.mode == TrainMode::NoDistill ? state.student : state.teacher, false);
  std::vector<Tensor> teacher_cls, teacher_patches;
  std::vector<Matrix> teacher_logits;
  for (std::size_t g = 0; g < G; ++g) {
    auto f = encode(wt, enc, stack_sequences(teacher_views[g]), v2);
    if (baseline) teacher_logits.push_back(prototype_logits(wt.prototypes, f.cls).matrix());
    teacher_cls.push_back(std::move(f.cls));
    if (v2) teacher_patches.push_back(std::move(f.patches));
  }

  // Student forward.
  const EncoderTensors ws = bind(state.student, true);
  std::vector<Tensor> student_cls, student_patches;
  std::vector<std::vector<unsigned char>> masks;
  std::size_t masked = 0;
  for (std::size_t v = 0; v < V; ++v) {
    const TokenBatch tb = stack_sequences(student_views[v]);
    auto f = encode(ws, enc, tb, v2 && v < G);
    student_cls.push_back(std::move(f.cls));
    if (v2 && v < G) {
      student_patches.push_back(std::move(f.patches));
      masks.push_back(tb.mask);
      masked += static_cast<std::size_t>(std::count(tb.mask.begin(), tb.mask.end(), 1));
    }
  }

  const PairingPlan plan = PairingPlan::multi_crop(G, V, cfg.include_same_view);
  LossConfig lcfg = cfg.loss;
  lcfg.teacher_temp = sched.teacher_temp;
  auto objective = [&](double gamma) {
    lcfg.gamma = gamma;
    if (v2)
      return simdinov2_loss(student_cls, teacher_cls, student_patches, teacher_patches, masks, plan, G, lcfg);
    return simdino_loss(student_cls, teacher_cls, plan, G, lcfg);
  };

  LossTerms terms;
  if (baseline) {
    std::vector<Tensor> student_logits;
    for (const auto& z : student_cls) student_logits.push_back(prototype_logits(ws.prototypes, z));
    terms = dino_loss(student_logits, teacher_logits, state.center, plan, lcfg);
  } else {
    if (!state.gamma_ready) {
      // ∇_Z of the distance alone, then of distance − R; the difference is −∇_Z R.
      const std::span<const Tensor> globals(student_cls.data(), G);
      backward(objective(0.0).total);
      std::vector<Matrix> dist_grad;
      for (const auto& z : globals) dist_grad.push_back(z.grad_matrix());
      backward(objective(1.0).total);
      double dist_sq = 0.0, rate_sq = 0.0;
      for (std::size_t g = 0; g < G; ++g) {
        const auto both = globals[g].grad();
        for (std::size_t i = 0; i < both.size(); ++i) {
          dist_sq += dist_grad[g].data[i] * dist_grad[g].data[i];
          const double r = dist_grad[g].data[i] - both[i];
          rate_sq += r * r;
        }
      }
      if (!(rate_sq > 0.0) || !std::isfinite(dist_sq)) throw TrainingDiverged(step, "gamma calibration gradient");
      state.gamma = cfg.gamma_scale * std::sqrt(dist_sq / rate_sq);
      state.gamma_ready = true;
    }
    terms = objective(state.gamma);
  }

  const double loss = terms.total.item();
  if (!std::isfinite(loss)) throw TrainingDiverged(step, "loss");
  backward(terms.total);
  EncoderParams grads = gradients(ws);
  check_finite(grads, step);
  const double grad_norm = clip_global_norm(grads, cfg.clip);

  const Matrix global_features = hstack(std::span<const Tensor>(student_cls.data(), G));
  StepMetrics m;
  m.step = step;
  m.loss = loss;
  m.distance = terms.distance;
  m.cls_distance = terms.cls_distance;
  m.patch_distance = terms.patch_distance;
  m.coding_rate = terms.coding_rate;
  if (baseline) {
    double r = 0.0;
    for (std::size_t g = 0; g < G; ++g) r += coding_rate(student_cls[g].matrix(), {cfg.loss.eps, cfg.loss.centered_covariance});
    m.coding_rate = r / static_cast<double>(G);
  }
  m.grad_norm = grad_norm;
  m.eff_rank = effective_rank(global_features);
  m.lambda = cfg.mode == TrainMode::NoDistill ? 0.0 : sched.lambda;
  m.lr = sched.lr;
  m.weight_decay = sched.wd;
  m.gamma = baseline ? 0.0 : state.gamma;
  m.teacher_temp = sched.teacher_temp;
  m.masked_patches = masked;

  if (audit && v2) {
    audit->student_patches.clear();
    audit->teacher_patches.clear();
    for (std::size_t g = 0; g < G; ++g) {
      audit->student_patches.push_back(student_patches[g].matrix());
      audit->teacher_patches.push_back(teacher_patches[g].matrix());
    }
    audit->masks = masks;
    audit->reported = terms.patch_distance;
  }

  adamw_step(state.student, grads, state.adam, sched.lr, sched.lr * sched.wd, {}, layer_scales(cfg));
  if (cfg.mode == TrainMode::NoDistill)
    state.teacher = state.student;
  else
    state.teacher = ema_update(state.teacher, state.student, sched.lambda);
  if (baseline && !state.center.frozen) {
    Matrix all(G * B, teacher_logits.front().cols);
    for (std::size_t g = 0; g < G; ++g)
      std::copy(teacher_logits[g].data.begin(), teacher_logits[g].data.end(), all.data.begin() + static_cast<std::ptrdiff_t>(g * B * all.cols));
    state.center = update_center(state.center, all);
  }
  ++state.step;
  return m;
}

}  // namespace

StepMetrics train_step(TrainState& state, const Dataset& ds, std::span<const std::size_t> batch, const TrainConfig& cfg,
                       PatchAudit* audit) {
  const std::size_t step = state.step;
  try {
    return step_impl(state, ds, batch, cfg, audit);
  } catch (const NonFiniteValue& e) {
    throw TrainingDiverged(step, e.what());
  }
}

RunResult run_training(const TrainConfig& cfg, const Dataset& ds, const RunOptions& opts, std::optional<TrainState> start) {
  cfg.validate();
  ds.validate();
  RunResult out;
  if (start) {
    Rng probe(0);
    const EncoderParams reference = init_encoder(cfg.effective_encoder(), probe);
    check_same_shapes(start->student, reference);
    check_same_shapes(start->teacher, reference);
    out.state = std::move(*start);
  } else {
    out.state = init_train_state(cfg);
  }

  auto checkpoint = [&](const std::string& name) {
    if (opts.checkpoint_dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(opts.checkpoint_dir, ec);
    if (ec) throw Error("cannot create checkpoint directory '" + opts.checkpoint_dir + "': " + ec.message());
    save_checkpoint((std::filesystem::path(opts.checkpoint_dir) / name).string(), out.state, opts.config_hash);
  };

  PatchAudit audit;
  while (out.state.step < cfg.steps) {
    const auto batch = draw_batch(out.state, ds, cfg.batch_size);
    const bool want_audit = opts.on_audit && cfg.mode == TrainMode::SimDinoV2;
    out.metrics.push_back(train_step(out.state, ds, batch, cfg, want_audit ? &audit : nullptr));
    if (opts.on_step) opts.on_step(out.metrics.back());
    if (want_audit) opts.on_audit(audit);
    if (opts.checkpoint_every > 0 && out.state.step % opts.checkpoint_every == 0 && out.state.step < cfg.steps) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_%06zu.bin", out.state.step);
      checkpoint(name);
    }
  }
  checkpoint("checkpoint_final.bin");
  return out;
}

// --- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'D', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint64_t kCheckpointVersion = 1;

void write_params(BinaryWriter& w, const std::string& prefix, const EncoderParams& p) {
  p.visit([&](const std::string& name, const Matrix& m) {
    w.str(prefix + name);
    w.u64(m.rows);
    w.u64(m.cols);
    w.f64s(m.data);
  });
}

void read_params(BinaryReader& r, const std::string& prefix, EncoderParams& p, std::size_t depth, const std::string& what) {
  p.blocks.assign(depth, {});
  p.visit([&](const std::string& name, Matrix& m) {
    const std::string got = r.str(256);
    if (got != prefix + name) throw Error(what + ": expected block '" + prefix + name + "', found '" + got + "'");
    const auto rows = r.u64(), cols = r.u64();
    if (rows * cols > (std::size_t{1} << 28)) throw Error(what + ": implausible shape for block " + got);
    m = Matrix(rows, cols, r.f64s(rows * cols));
  });
}

}  // namespace

std::string serialize_checkpoint(const TrainState& s, std::uint64_t config_hash) {
  std::ostringstream os;
  BinaryWriter w(os);
  w.raw({kCheckpointMagic, 8});
  w.u64(kCheckpointVersion);
  w.u64(config_hash);
  w.u64(s.step);
  w.f64(s.gamma);
  w.u64(s.gamma_ready ? 1 : 0);
  w.str(s.rng.state());
  w.u64(s.adam.t);
  w.f64(s.center.decay);
  w.u64(s.center.frozen ? 1 : 0);
  w.u64(s.center.center.size());
  w.f64s(s.center.center);
  w.u64(s.student.blocks.size());
  write_params(w, "student.", s.student);
  write_params(w, "teacher.", s.teacher);
  write_params(w, "adam_m.", s.adam.m);
  write_params(w, "adam_v.", s.adam.v);
  return os.str();
}

namespace {
std::uint64_t read_header(BinaryReader& r, const std::string& what) {
  if (r.raw(8) != std::string(kCheckpointMagic, 8)) throw Error(what + ": not a checkpoint (bad magic)");
  if (const auto v = r.u64(); v != kCheckpointVersion)
    throw Error(what + ": unsupported checkpoint format version " + std::to_string(v));
  return r.u64();
}
}  // namespace

TrainState deserialize_checkpoint(const std::string& bytes, std::uint64_t expected_hash, const std::string& what) {
  std::istringstream is(bytes);
  BinaryReader r(is, what);
  const auto hash = read_header(r, what);
  if (hash != expected_hash)
    throw Error(what + ": checkpoint config hash " + hex64(hash) + " does not match config hash " + hex64(expected_hash));
  TrainState s;
  s.step = r.u64();
  s.gamma = r.f64();
  s.gamma_ready = r.u64() != 0;
  s.rng.set_state(r.str(1 << 16));
  s.adam.t = r.u64();
  s.center.decay = r.f64();
  s.center.frozen = r.u64() != 0;
  const auto m = r.u64();
  if (m > (1u << 24)) throw Error(what + ": implausible center length");
  s.center.center = r.f64s(m);
  const auto depth = r.u64();
  if (depth > 4096) throw Error(what + ": implausible depth");
  read_params(r, "student.", s.student, depth, what);
  read_params(r, "teacher.", s.teacher, depth, what);
  read_params(r, "adam_m.", s.adam.m, depth, what);
  read_params(r, "adam_v.", s.adam.v, depth, what);
  r.expect_end();
  check_same_shapes(s.student, s.teacher);
  check_same_shapes(s.student, s.adam.m);
  check_same_shapes(s.student, s.adam.v);
  return s;
}

void save_checkpoint(const std::string& path, const TrainState& state, std::uint64_t config_hash) {
  write_file_atomic(path, serialize_checkpoint(state, config_hash));
}

TrainState load_checkpoint(const std::string& path, std::uint64_t expected_hash) {
  return deserialize_checkpoint(read_file(path), expected_hash, path);
}

std::uint64_t checkpoint_config_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint '" + path + "'");
  BinaryReader r(is, path);
  return read_header(r, path);
}

// --- metrics log ---------------------------------------------------------------

void write_metrics_header(std::ostream& os) {
  os << "step,loss,distance,coding_rate,grad_norm,eff_rank,lambda,lr,weight_decay,gamma,teacher_temp,cls_distance,"
        "patch_distance,masked_patches\n";
}

void write_metrics_row(std::ostream& os, const StepMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu\n", m.step,
                m.loss, m.distance, m.coding_rate, m.grad_norm, m.eff_rank, m.lambda, m.lr, m.weight_decay, m.gamma,
                m.teacher_temp, m.cls_distance, m.patch_distance, m.masked_patches);
  os << buf;
}

}  // namespace simdino

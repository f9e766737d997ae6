#include "simdino/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

#include "simdino/binary_io.hpp"

namespace simdino {

RunConfig::RunConfig() {
  train.views.global.target_size = 32;
  train.views.local.target_size = 16;
  train.encoder.patch_dim = channels * train.views.patch * train.views.patch;
}

void RunConfig::validate() const {
  if (channels == 0) throw Error("model.channels must be positive");
  if (train.encoder.patch_dim != channels * train.views.patch * train.views.patch)
    throw Error("patch_dim must equal channels·patch²");
  train.validate();
  if (data_path.empty()) synthetic.validate();
  if (knn_k == 0) throw Error("eval.k must be ≥ 1");
  if (eval_view.crop > eval_view.resize_edge || eval_view.crop % train.views.patch != 0)
    throw Error("eval.crop must be a multiple of the patch size and at most eval.resize_edge");
  if (train.encoder.max_grid == 0) throw Error("model.max_grid must be positive");
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
    throw Error("expected a finite number, got '" + s + "'");
  return v;
}

std::uint64_t to_uint(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw Error("expected a non-negative integer, got '" + s + "'");
  errno = 0;
  const auto v = std::strtoull(s.c_str(), nullptr, 10);
  if (errno == ERANGE) throw Error("integer out of range: '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error("expected true or false, got '" + s + "'");
}

struct Field {
  std::string name;
  std::string doc;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
  bool hashed = true;
};

Field num(std::string name, double& ref, std::string doc, double lo = -INFINITY, double hi = INFINITY) {
  return {name, std::move(doc), [&ref] { return fmt(ref); }, [&ref, lo, hi](const std::string& s) {
            const double v = to_double(s);
            if (v < lo || v > hi) throw Error("value " + s + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
            ref = v;
          }};
}

template <typename U>
Field uint(std::string name, U& ref, std::string doc, std::uint64_t lo = 0) {
  return {name, std::move(doc), [&ref] { return std::to_string(ref); }, [&ref, lo](const std::string& s) {
            const auto v = to_uint(s);
            if (v < lo) throw Error("value " + s + " is below the minimum " + std::to_string(lo));
            ref = static_cast<U>(v);
          }};
}

Field flag(std::string name, bool& ref, std::string doc) {
  return {name, std::move(doc), [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref](const std::string& s) { ref = to_bool(s); }};
}

Field text(std::string name, std::string& ref, std::string doc) {
  return {name, std::move(doc), [&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }};
}

Field unhashed(Field f) {
  f.hashed = false;
  return f;
}

std::vector<Field> fields(RunConfig& c) {
  auto& t = c.train;
  auto& e = t.encoder;
  auto& v = t.views;
  auto& l = t.loss;
  auto& d = c.synthetic;
  auto refresh_patch_dim = [&c] { c.train.encoder.patch_dim = c.channels * c.train.views.patch * c.train.views.patch; };
  std::vector<Field> f;
  f.push_back({"mode", "simdino | simdinov2 | dino-baseline | no-distill", [&t] { return std::string(to_string(t.mode)); },
               [&t](const std::string& s) { t.mode = parse_train_mode(s); }});
  f.push_back(uint("seed", t.seed, "initialization, batch and view sampling seed"));
  f.push_back(unhashed(text("out_dir", c.out_dir, "artifact directory")));

  f.push_back(text("data.path", c.data_path, "dataset directory with manifest.txt; empty generates synthetic blobs"));
  f.push_back(uint("data.classes", d.classes, "synthetic class count", 1));
  f.push_back(uint("data.per_class", d.per_class, "synthetic images per class", 1));
  f.push_back(uint("data.size", d.size, "synthetic image edge in pixels", 8));
  f.push_back(num("data.noise", d.noise, "per-pixel Gaussian noise σ", 0.0));
  f.push_back(num("data.color_jitter", d.color_jitter, "per-image object colour jitter", 0.0));
  f.push_back(num("data.radius_min", d.radius_min, "smallest object radius", 0.0));
  f.push_back(num("data.radius_max", d.radius_max, "largest object radius", 0.0));
  f.push_back(num("data.val_fraction", d.val_fraction, "held-out fraction per class", 0.0, 1.0));
  f.push_back(uint("data.seed", d.seed, "synthetic generator seed"));

  Field channels = uint("model.channels", c.channels, "image channels", 1);
  channels.set = [&c, refresh_patch_dim, inner = channels.set](const std::string& s) { inner(s); refresh_patch_dim(); };
  f.push_back(channels);
  Field patch = uint("model.patch_size", v.patch, "patch edge P", 1);
  patch.set = [refresh_patch_dim, inner = patch.set](const std::string& s) { inner(s); refresh_patch_dim(); };
  f.push_back(patch);
  f.push_back(uint("model.embed_dim", e.embed_dim, "token width", 1));
  f.push_back(uint("model.depth", e.depth, "transformer blocks", 1));
  f.push_back(uint("model.heads", e.heads, "attention heads", 1));
  f.push_back(uint("model.mlp_hidden", e.mlp_hidden, "block MLP hidden width", 1));
  f.push_back(uint("model.proj_hidden", e.proj_hidden, "projector hidden width", 1));
  f.push_back(uint("model.out_dim", e.out_dim, "feature dimension d", 1));
  f.push_back(uint("model.max_grid", e.max_grid, "positional table grid edge", 1));
  f.push_back(num("model.init_std", e.init_std, "truncated-normal init σ", 0.0));
  f.push_back(num("model.pixel_mean", e.pixel_mean, "input standardization mean"));
  f.push_back(num("model.pixel_std", e.pixel_std, "input standardization σ", 1e-12));
  f.push_back(uint("model.prototypes", l.prototypes, "baseline prototype count m", 1));

  f.push_back(uint("views.global_count", v.global_count, "global crops per image", 1));
  f.push_back(uint("views.local_count", v.local_count, "local crops per image"));
  f.push_back(uint("views.global_size", v.global.target_size, "global crop edge S", 1));
  f.push_back(uint("views.local_size", v.local.target_size, "local crop edge S", 1));
  f.push_back(num("views.global_scale_min", v.global.scale_min, "global crop area fraction, low", 0.0, 1.0));
  f.push_back(num("views.global_scale_max", v.global.scale_max, "global crop area fraction, high", 0.0, 1.0));
  f.push_back(num("views.local_scale_min", v.local.scale_min, "local crop area fraction, low", 0.0, 1.0));
  f.push_back(num("views.local_scale_max", v.local.scale_max, "local crop area fraction, high", 0.0, 1.0));
  Field aspect_min = num("views.aspect_min", v.global.aspect_min, "crop aspect ratio, low", 0.0);
  aspect_min.set = [&v, inner = aspect_min.set](const std::string& s) { inner(s); v.local.aspect_min = v.global.aspect_min; };
  f.push_back(aspect_min);
  Field aspect_max = num("views.aspect_max", v.global.aspect_max, "crop aspect ratio, high", 0.0);
  aspect_max.set = [&v, inner = aspect_max.set](const std::string& s) { inner(s); v.local.aspect_max = v.global.aspect_max; };
  f.push_back(aspect_max);
  f.push_back(flag("views.include_same_view", t.include_same_view, "also pair a global view with itself"));

  f.push_back(num("loss.gamma", l.gamma, "coding-rate weight γ (used when loss.calibrate_gamma = false)", 0.0));
  f.push_back(flag("loss.calibrate_gamma", t.calibrate_gamma, "set γ from first-batch gradient norms"));
  f.push_back(num("loss.gamma_scale", t.gamma_scale, "multiplier on the calibrated γ", 0.0));
  f.push_back(num("loss.eps", l.eps, "coding-rate ε", 1e-12));
  f.push_back(flag("loss.centered_covariance", l.centered_covariance, "centre features before the coding rate"));
  f.push_back(num("loss.student_temp", l.student_temp, "baseline student temperature", 1e-12));
  f.push_back(num("loss.teacher_temp", l.teacher_temp, "baseline teacher temperature", 1e-12));
  f.push_back(num("loss.teacher_temp_warmup_start", t.teacher_temp_warmup_start, "baseline teacher temperature at step 0", 1e-12));
  f.push_back(uint("loss.teacher_temp_warmup_steps", t.teacher_temp_warmup_steps, "linear teacher temperature warm-up"));
  f.push_back(num("loss.center_decay", l.center_decay, "baseline centre EMA ν", 0.0, 1.0));
  f.push_back(flag("loss.center_frozen", t.center_frozen, "baseline: keep the centre at zero"));
  f.push_back(num("loss.mask_sample_prob", l.mask_sample_prob, "simdinov2: probability a global view is masked", 0.0, 1.0));
  f.push_back(num("loss.mask_ratio_min", l.mask_ratio_min, "simdinov2: smallest masked fraction", 0.0, 1.0));
  f.push_back(num("loss.mask_ratio_max", l.mask_ratio_max, "simdinov2: largest masked fraction", 0.0, 1.0));

  f.push_back(uint("optim.batch_size", t.batch_size, "images per step", 2));
  f.push_back(uint("optim.steps", t.steps, "optimizer steps"));
  f.push_back(num("optim.lr", t.lr, "peak learning rate", 0.0));
  f.push_back(num("optim.lr_end", t.lr_end, "final learning rate", 0.0));
  f.push_back(uint("optim.warmup_steps", t.warmup_steps, "linear learning-rate warm-up"));
  f.push_back(num("optim.weight_decay", t.weight_decay, "initial weight decay", 0.0));
  f.push_back(num("optim.weight_decay_end", t.weight_decay_end, "final weight decay", 0.0));
  f.push_back(num("optim.momentum", t.momentum, "initial teacher EMA λ", 0.0, 1.0));
  f.push_back(num("optim.momentum_end", t.momentum_end, "final teacher EMA λ", 0.0, 1.0));
  f.push_back(num("optim.clip", t.clip, "global gradient-norm clip (0 disables)", 0.0));
  f.push_back(num("optim.layer_decay", t.layer_decay, "layerwise lr decay (1 disables)", 1e-12, 1.0));

  f.push_back(unhashed(uint("run.checkpoint_every", c.checkpoint_every, "steps between checkpoints (0: final only)")));
  f.push_back(unhashed(uint("eval.k", c.knn_k, "kNN neighbours", 1)));
  f.push_back(unhashed(uint("eval.linear_epochs", c.linear.epochs, "linear probe epochs")));
  f.push_back(unhashed(num("eval.linear_lr", c.linear.lr, "linear probe learning rate", 0.0)));
  f.push_back(unhashed(uint("eval.resize_edge", c.eval_view.resize_edge, "eval view: shorter edge after resize", 1)));
  f.push_back(unhashed(uint("eval.crop", c.eval_view.crop, "eval view: centre crop edge", 1)));
  f.push_back(unhashed(uint("eval.batch", c.eval_view.batch, "images per eval forward", 1)));
  f.push_back(unhashed(flag("eval.probe_student", c.probe_student, "also probe the student encoder")));
  return f;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

std::vector<ConfigKey> config_keys() {
  RunConfig c;
  std::vector<ConfigKey> out;
  for (const auto& f : fields(c)) out.push_back({f.name, f.doc});
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (auto& f : fields(cfg))
    if (f.name == key) {
      try {
        f.set(value);
      } catch (const Error& e) {
        throw Error("field '" + key + "': " + e.what());
      }
      return;
    }
  throw Error("unknown key '" + key + "'");
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(where + "expected 'key = value', got '" + body + "'");
    const std::string key = trim(body.substr(0, eq)), value = trim(body.substr(eq + 1));
    if (!seen.insert(key).second) throw Error(where + "field '" + key + "' is set twice");
    try {
      set_config_value(cfg, key, value);
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(source + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path), path); }

std::string serialize_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  for (const auto& f : fields(copy)) out += f.name + " = " + f.get() + "\n";
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string canon;
  for (const auto& f : fields(copy))
    if (f.hashed) canon += f.name + "=" + f.get() + "\n";
  return fnv1a64(canon);
}

}  // namespace simdino

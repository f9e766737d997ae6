#include "simdino/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace simdino {

void EncoderConfig::validate() const {
  if (patch_dim == 0 || max_grid == 0 || embed_dim == 0 || depth == 0 || heads == 0 || mlp_hidden == 0 ||
      proj_hidden == 0 || out_dim == 0)
    throw Error("encoder dimensions must be positive");
  if (embed_dim % heads != 0)
    throw Error("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " + std::to_string(heads));
  if (!(init_std > 0.0)) throw Error("encoder init_std must be positive");
  if (!(pixel_std > 0.0)) throw Error("encoder pixel_std must be positive");
}

namespace {

Matrix normal_matrix(std::size_t r, std::size_t c, double sigma, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data) v = rng.truncated_normal(sigma);
  return m;
}

}  // namespace

EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const double s = cfg.init_std;
  const std::size_t e = cfg.embed_dim;
  EncoderParams p;
  p.patch_w = normal_matrix(cfg.patch_dim, e, s, rng);
  p.patch_b = Matrix(1, e);
  p.cls_token = normal_matrix(1, e, s, rng);
  p.pos_table = normal_matrix(cfg.max_grid * cfg.max_grid, e, s, rng);
  p.mask_token = normal_matrix(1, cfg.patch_dim, s, rng);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    BlockWeights<Matrix> b;
    b.ln1_g = Matrix(1, e, 1.0);
    b.ln1_b = Matrix(1, e);
    b.qkv_w = normal_matrix(e, 3 * e, s, rng);
    b.qkv_b = Matrix(1, 3 * e);
    b.attn_w = normal_matrix(e, e, s, rng);
    b.attn_b = Matrix(1, e);
    b.ln2_g = Matrix(1, e, 1.0);
    b.ln2_b = Matrix(1, e);
    b.fc1_w = normal_matrix(e, cfg.mlp_hidden, s, rng);
    b.fc1_b = Matrix(1, cfg.mlp_hidden);
    b.fc2_w = normal_matrix(cfg.mlp_hidden, e, s, rng);
    b.fc2_b = Matrix(1, e);
    p.blocks.push_back(std::move(b));
  }
  p.norm_g = Matrix(1, e, 1.0);
  p.norm_b = Matrix(1, e);
  p.head1_w = normal_matrix(e, cfg.proj_hidden, s, rng);
  p.head1_b = Matrix(1, cfg.proj_hidden);
  p.head2_w = normal_matrix(cfg.proj_hidden, cfg.proj_hidden, s, rng);
  p.head2_b = Matrix(1, cfg.proj_hidden);
  p.head3_w = normal_matrix(cfg.proj_hidden, cfg.out_dim, s, rng);
  p.head3_b = Matrix(1, cfg.out_dim);
  if (cfg.prototypes > 0) p.prototypes = normal_matrix(cfg.prototypes, cfg.out_dim, s, rng);
  return p;
}

EncoderParams zeros_like(const EncoderParams& p) {
  EncoderParams z = p;
  z.visit([](const std::string&, Matrix& m) { std::fill(m.data.begin(), m.data.end(), 0.0); });
  return z;
}

std::size_t parameter_count(const EncoderParams& p) {
  std::size_t n = 0;
  p.visit([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

void check_same_shapes(const EncoderParams& a, const EncoderParams& b) {
  std::vector<std::pair<std::string, const Matrix*>> left;
  a.visit([&](const std::string& name, const Matrix& m) { left.emplace_back(name, &m); });
  std::size_t i = 0;
  b.visit([&](const std::string& name, const Matrix& m) {
    if (i >= left.size() || left[i].first != name || !left[i].second->same_shape(m))
      throw Error("parameter shape mismatch at " + name);
    ++i;
  });
  if (i != left.size()) throw Error("parameter sets differ in block count");
}

EncoderTensors bind(const EncoderParams& p, bool track) {
  EncoderTensors t;
  t.blocks.resize(p.blocks.size());
  std::vector<const Matrix*> src;
  p.visit([&](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  t.visit([&](const std::string&, Tensor& dst) {
    const Matrix& m = *src[i++];
    if (!m.empty()) dst = track ? Tensor::leaf(m) : Tensor::constant(m);
  });
  return t;
}

EncoderParams gradients(const EncoderTensors& t) {
  EncoderParams g;
  g.blocks.resize(t.blocks.size());
  std::vector<const Tensor*> src;
  t.visit([&](const std::string&, const Tensor& x) { src.push_back(&x); });
  std::size_t i = 0;
  g.visit([&](const std::string&, Matrix& dst) {
    const Tensor& x = *src[i++];
    if (x.defined()) dst = x.grad_matrix();
  });
  return g;
}

namespace {

struct AxisWeight {
  std::size_t lo, hi;
  double frac;
};

AxisWeight grid_tap(std::size_t from, std::size_t to, std::size_t i) {
  const double s = std::clamp((static_cast<double>(i) + 0.5) * static_cast<double>(from) / static_cast<double>(to) - 0.5,
                              0.0, static_cast<double>(from - 1));
  const auto lo = static_cast<std::size_t>(std::floor(s));
  return {lo, std::min(lo + 1, from - 1), s - static_cast<double>(lo)};
}

}  // namespace

Matrix position_weights(std::size_t from, std::size_t to,
                        std::span<const std::pair<std::size_t, std::size_t>> positions) {
  if (from == 0 || to == 0) throw Error("position grid sizes must be positive");
  Matrix w(positions.size(), from * from);
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const auto [r, c] = positions[k];
    if (r >= to || c >= to) throw Error("position outside the " + std::to_string(to) + "×" + std::to_string(to) + " grid");
    const auto ty = grid_tap(from, to, r), tx = grid_tap(from, to, c);
    w(k, ty.lo * from + tx.lo) += (1 - ty.frac) * (1 - tx.frac);
    w(k, ty.lo * from + tx.hi) += (1 - ty.frac) * tx.frac;
    w(k, ty.hi * from + tx.lo) += ty.frac * (1 - tx.frac);
    w(k, ty.hi * from + tx.hi) += ty.frac * tx.frac;
  }
  return w;
}

Matrix interpolate_positions(const Matrix& table, std::size_t from, std::size_t to) {
  if (table.rows != from * from) throw Error("positional table has " + std::to_string(table.rows) + " rows for a grid of " + std::to_string(from));
  if (from == to) return table;
  std::vector<std::pair<std::size_t, std::size_t>> raster;
  for (std::size_t r = 0; r < to; ++r)
    for (std::size_t c = 0; c < to; ++c) raster.emplace_back(r, c);
  return matmul(position_weights(from, to, raster), table);
}

TokenBatch stack_sequences(std::span<const PatchSequence> seqs) {
  if (seqs.empty()) throw Error("stack_sequences: empty batch");
  TokenBatch b;
  b.batch = seqs.size();
  b.tokens = seqs[0].count();
  b.grid = seqs[0].grid;
  const std::size_t d = seqs[0].patch_dim;
  b.rows = Matrix(b.batch * b.tokens, d);
  b.mask.reserve(b.batch * b.tokens);
  b.positions.reserve(b.batch * b.tokens);
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const auto& q = seqs[s];
    if (q.count() != b.tokens || q.patch_dim != d || q.grid != b.grid)
      throw Error("stack_sequences: sequence " + std::to_string(s) + " differs in token count or dimension");
    for (std::size_t i = 0; i < b.tokens; ++i)
      for (std::size_t r = 0; r < d; ++r) b.rows(s * b.tokens + i, r) = q.tokens(r, i);
    b.mask.insert(b.mask.end(), q.mask.begin(), q.mask.end());
    b.positions.insert(b.positions.end(), q.positions.begin(), q.positions.end());
  }
  return b;
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row(matmul(x, w), b); }

Tensor project(const EncoderTensors& w, const Tensor& x) {
  Tensor h = gelu(linear(x, w.head1_w, w.head1_b));
  h = gelu(linear(h, w.head2_w, w.head2_b));
  return linear(h, w.head3_w, w.head3_b);
}

}  // namespace

BatchFeatures encode(const EncoderTensors& w, const EncoderConfig& cfg, const TokenBatch& batch, bool with_patches) {
  const std::size_t B = batch.batch, N = batch.tokens, T = N + 1;
  if (batch.rows.cols != cfg.patch_dim)
    throw Error("token dimension " + std::to_string(batch.rows.cols) + " does not match patch embedding input " +
                std::to_string(cfg.patch_dim));
  if (N == 0) throw Error("encoder input needs at least one token");

  Matrix normalized = batch.rows;
  for (auto& v : normalized.data) v = (v - cfg.pixel_mean) / cfg.pixel_std;
  Tensor tokens = Tensor::constant(normalized);
  if (std::find(batch.mask.begin(), batch.mask.end(), 1) != batch.mask.end())
    tokens = substitute_rows(tokens, batch.mask, w.mask_token);

  Tensor embedded = linear(tokens, w.patch_w, w.patch_b);
  const Tensor pos = matmul(Tensor::constant(position_weights(cfg.max_grid, batch.grid, batch.positions)), w.pos_table);
  embedded = add(embedded, pos);

  // Sequence b occupies rows b·T .. b·T+N with its class token first.
  const Tensor parts[] = {embedded, w.cls_token};
  std::vector<std::size_t> order;
  order.reserve(B * T);
  for (std::size_t b = 0; b < B; ++b) {
    order.push_back(B * N);
    for (std::size_t i = 0; i < N; ++i) order.push_back(b * N + i);
  }
  Tensor x = select_rows(concat_rows(parts), order);

  for (const auto& blk : w.blocks) {
    Tensor h = layer_norm(x, blk.ln1_g, blk.ln1_b);
    h = attention(linear(h, blk.qkv_w, blk.qkv_b), T, cfg.heads);
    x = add(x, linear(h, blk.attn_w, blk.attn_b));
    h = layer_norm(x, blk.ln2_g, blk.ln2_b);
    h = linear(gelu(linear(h, blk.fc1_w, blk.fc1_b)), blk.fc2_w, blk.fc2_b);
    x = add(x, h);
  }
  x = layer_norm(x, w.norm_g, w.norm_b);

  std::vector<std::size_t> cls_rows(B), patch_rows;
  for (std::size_t b = 0; b < B; ++b) cls_rows[b] = b * T;
  BatchFeatures out;
  out.batch = B;
  out.tokens = N;
  if (with_patches) {
    patch_rows.reserve(B * N);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 1; i < T; ++i) patch_rows.push_back(b * T + i);
    const Tensor y = project(w, x);
    out.cls = l2_normalize_columns(transpose(select_rows(y, cls_rows)));
    out.patches = l2_normalize_columns(transpose(select_rows(y, patch_rows)));
  } else {
    out.cls = l2_normalize_columns(transpose(project(w, select_rows(x, cls_rows))));
  }
  return out;
}

FeatureBundle forward(const EncoderParams& params, const EncoderConfig& cfg, const PatchSequence& seq) {
  const PatchSequence one[] = {seq};
  const auto feats = encode(bind(params, false), cfg, stack_sequences(one), true);
  FeatureBundle f;
  f.cls.assign(feats.cls.data().begin(), feats.cls.data().end());
  f.patches = feats.patches.matrix();
  return f;
}

Tensor prototype_logits(const Tensor& prototypes, const Tensor& features) {
  if (!prototypes.defined()) throw Error("prototype head requested but the encoder has no prototypes");
  const Tensor unit_rows = l2_normalize_columns(transpose(prototypes));  // d×m
  return matmul(transpose(features), unit_rows);
}

}  // namespace simdino

#pragma once

// Vision Transformer backbone plus a 3-layer projector. Tokens run through a
// patch embedding, interpolated positional encodings, a prepended class token,
// pre-norm transformer blocks and a final norm; every output token is then
// projected and ℓ²-normalized onto the unit sphere.
//
// Internally activations are row-per-token: a batch of B sequences of T
// tokens is a (B·T)×e matrix. Features are returned column-per-sample (d×B),
// matching the coding-rate convention.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "simdino/matrix.hpp"
#include "simdino/random.hpp"
#include "simdino/tensor.hpp"
#include "simdino/views.hpp"

namespace simdino {

struct EncoderConfig {
  std::size_t patch_dim = 192;   // D = C·P²
  std::size_t max_grid = 4;      // positional table is max_grid × max_grid
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 128;
  std::size_t proj_hidden = 128;
  std::size_t out_dim = 32;
  std::size_t prototypes = 0;    // >0 adds the weight-normalized prototype layer
  double init_std = 0.02;
  double pixel_mean = 0.5;       // tokens enter as (x − mean)/std
  double pixel_std = 0.25;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

template <typename T>
struct BlockWeights {
  T ln1_g, ln1_b, qkv_w, qkv_b, attn_w, attn_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
};

/// Full parameter set. Instantiated with Matrix for storage and with Tensor
/// for one differentiable forward pass.
template <typename T>
struct EncoderWeights {
  T patch_w, patch_b, cls_token, pos_table, mask_token;
  std::vector<BlockWeights<T>> blocks;
  T norm_g, norm_b;
  T head1_w, head1_b, head2_w, head2_b, head3_w, head3_b;
  T prototypes;  // m×d, empty unless EncoderConfig::prototypes > 0

  /// Calls f(name, block) for every parameter block in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& s, F& f) {
    f("patch_w", s.patch_w);
    f("patch_b", s.patch_b);
    f("cls_token", s.cls_token);
    f("pos_table", s.pos_table);
    f("mask_token", s.mask_token);
    for (std::size_t i = 0; i < s.blocks.size(); ++i) {
      auto& b = s.blocks[i];
      const std::string p = "blocks." + std::to_string(i) + ".";
      f(p + "ln1_g", b.ln1_g);
      f(p + "ln1_b", b.ln1_b);
      f(p + "qkv_w", b.qkv_w);
      f(p + "qkv_b", b.qkv_b);
      f(p + "attn_w", b.attn_w);
      f(p + "attn_b", b.attn_b);
      f(p + "ln2_g", b.ln2_g);
      f(p + "ln2_b", b.ln2_b);
      f(p + "fc1_w", b.fc1_w);
      f(p + "fc1_b", b.fc1_b);
      f(p + "fc2_w", b.fc2_w);
      f(p + "fc2_b", b.fc2_b);
    }
    f("norm_g", s.norm_g);
    f("norm_b", s.norm_b);
    f("head1_w", s.head1_w);
    f("head1_b", s.head1_b);
    f("head2_w", s.head2_w);
    f("head2_b", s.head2_b);
    f("head3_w", s.head3_w);
    f("head3_b", s.head3_b);
    f("prototypes", s.prototypes);
  }
};

using EncoderParams = EncoderWeights<Matrix>;
using EncoderTensors = EncoderWeights<Tensor>;

/// Truncated-normal weights (σ = init_std), zero biases, unit norm gains.
EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng);
/// Zero-filled parameter set with the shapes of cfg (used for gradients and moments).
EncoderParams zeros_like(const EncoderParams& p);
std::size_t parameter_count(const EncoderParams& p);
void check_same_shapes(const EncoderParams& a, const EncoderParams& b);

/// Leaf tensors (tracked) or constants over the stored parameters.
EncoderTensors bind(const EncoderParams& p, bool track);
/// Adjoints accumulated on bound leaves, in parameter layout.
EncoderParams gradients(const EncoderTensors& t);

/// Bilinear interpolation weights (align_corners = false) mapping a
/// `from`×`from` grid onto the cell `pos` of a `to`×`to` grid; one row per position.
Matrix position_weights(std::size_t from, std::size_t to,
                        std::span<const std::pair<std::size_t, std::size_t>> positions);
/// Positional table (from² × e) interpolated onto a to×to grid, raster order.
Matrix interpolate_positions(const Matrix& table, std::size_t from, std::size_t to);

/// Sequences sharing one token count, stacked row-wise for a batched forward.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t tokens = 0;  // N per sequence
  std::size_t grid = 0;
  Matrix rows;             // (B·N)×D
  std::vector<unsigned char> mask;
  std::vector<std::pair<std::size_t, std::size_t>> positions;
};

TokenBatch stack_sequences(std::span<const PatchSequence> seqs);

struct BatchFeatures {
  Tensor cls;      // d×B, unit columns
  Tensor patches;  // d×(B·N), column b·N + i; undefined unless requested
  std::size_t batch = 0;
  std::size_t tokens = 0;
};

BatchFeatures encode(const EncoderTensors& w, const EncoderConfig& cfg, const TokenBatch& batch, bool with_patches);

struct FeatureBundle {
  std::vector<double> cls;  // d
  Matrix patches;           // d×N
};

/// Single-sequence forward on stored parameters.
FeatureBundle forward(const EncoderParams& params, const EncoderConfig& cfg, const PatchSequence& seq);

/// Row-normalized prototypes Wn (m×d) and logits Wn·z for feature columns z (d×B) → B×m.
Tensor prototype_logits(const Tensor& prototypes, const Tensor& features);

}  // namespace simdino

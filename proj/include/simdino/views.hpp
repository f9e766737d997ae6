#pragma once

// Multi-crop view construction: area-constrained crops, bilinear resize,
// patchification into raster-ordered token columns, the evaluation view and
// token masking.
//
// Resize convention (align_corners = false): output pixel y of an S-pixel axis
// samples source coordinate s = (y + ½)·(L/S) − ½ of an L-pixel axis, clamped
// to [0, L−1], and interpolates linearly between ⌊s⌋ and ⌊s⌋+1.

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "simdino/matrix.hpp"
#include "simdino/random.hpp"

namespace simdino {

/// C×H×W image, channel-major.
struct Image {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  bool operator==(const Image&) const = default;
};

enum class ViewKind { Local, Global, Eval };
const char* to_string(ViewKind k);

struct ViewSpec {
  ViewKind kind = ViewKind::Global;
  std::size_t top = 0, left = 0, height = 0, width = 0;  // crop box in source pixels
  std::size_t target_size = 0;                           // S
  double area_fraction = 1.0;                            // sampled p

  bool operator==(const ViewSpec&) const = default;
};

struct CropConfig {
  double scale_min = 0.4;
  double scale_max = 1.0;
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;
  std::size_t target_size = 32;

  void validate() const;
};

struct PatchSequence {
  std::size_t patch_dim = 0;   // D = C·P²
  std::size_t grid = 0;        // S/P
  Matrix tokens;               // D×N, column i is token i
  std::vector<unsigned char> mask;                           // length N
  std::vector<std::pair<std::size_t, std::size_t>> positions;  // (row, col) in the view grid

  std::size_t count() const { return tokens.cols; }
  std::size_t masked() const;
};

/// Samples area fraction p ~ U[scale_min, scale_max] and aspect ratio
/// ~ U[aspect_min, aspect_max], then rounds to a crop box that fits the image.
ViewSpec sample_view(const Image& image, ViewKind kind, const CropConfig& cfg, Rng& rng);

/// Crop resized to S×S.
Image resize_crop(const Image& image, const ViewSpec& spec);
/// Bilinear resize of the whole image.
Image resize(const Image& image, std::size_t out_h, std::size_t out_w);

/// Splits an S×S image into (S/P)² patches in raster order.
PatchSequence patchify(const Image& square, std::size_t patch);
/// Inverse of patchify, placing each token at its recorded position.
Image reassemble(const PatchSequence& seq, std::size_t channels, std::size_t patch);

PatchSequence apply_view(const Image& image, const ViewSpec& spec, std::size_t patch);

/// Shorter edge resized to `resize_edge`, then the centered crop_size×crop_size window.
PatchSequence eval_view(const Image& image, std::size_t resize_edge, std::size_t crop_size, std::size_t patch);

/// Replaces ⌈fraction·N⌉ distinct uniformly chosen tokens with `mask_token`.
PatchSequence apply_mask(const PatchSequence& seq, double fraction, const std::vector<double>& mask_token, Rng& rng);

/// Views of one image in the fixed order [global..., local...].
struct MultiCropConfig {
  CropConfig global{0.4, 1.0, 3.0 / 4.0, 4.0 / 3.0, 32};
  CropConfig local{0.05, 0.4, 3.0 / 4.0, 4.0 / 3.0, 16};
  std::size_t global_count = 2;
  std::size_t local_count = 4;
  std::size_t patch = 8;

  void validate() const;
};

std::vector<ViewSpec> sample_views(const Image& image, const MultiCropConfig& cfg, Rng& rng);

}  // namespace simdino

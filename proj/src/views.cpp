#include "simdino/views.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace simdino {

const char* to_string(ViewKind k) {
  switch (k) {
    case ViewKind::Local: return "local";
    case ViewKind::Global: return "global";
    case ViewKind::Eval: return "eval";
  }
  return "?";
}

void CropConfig::validate() const {
  if (!(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0))
    throw Error("crop scale range must satisfy 0 < min ≤ max ≤ 1");
  if (!(aspect_min > 0.0 && aspect_min <= aspect_max)) throw Error("crop aspect range must satisfy 0 < min ≤ max");
  if (target_size == 0) throw Error("crop target size must be positive");
}

void MultiCropConfig::validate() const {
  global.validate();
  local.validate();
  if (patch == 0 || global.target_size % patch != 0 || local.target_size % patch != 0)
    throw Error("patch size " + std::to_string(patch) + " must divide the crop sizes " +
                std::to_string(global.target_size) + " and " + std::to_string(local.target_size));
  if (global_count == 0) throw Error("at least one global view is required");
}

std::size_t PatchSequence::masked() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }

ViewSpec sample_view(const Image& image, ViewKind kind, const CropConfig& cfg, Rng& rng) {
  cfg.validate();
  const double H = static_cast<double>(image.height), W = static_cast<double>(image.width);
  const double p = rng.uniform(cfg.scale_min, cfg.scale_max);
  const double aspect = rng.uniform(cfg.aspect_min, cfg.aspect_max);  // height / width
  const double area = p * H * W;
  if (area < 1.0) throw Error("image " + shape_string(image.height, image.width) + " too small for crop fraction " + std::to_string(p));

  // Fix the height from the aspect ratio, then solve the width from the area;
  // if the width clamps, re-solve the height so the area law survives clamping.
  auto clamp_round = [](double v, double hi) { return std::clamp(std::round(v), 1.0, hi); };
  double h = clamp_round(std::sqrt(area * aspect), H);
  double w = clamp_round(area / h, W);
  h = clamp_round(area / w, H);

  ViewSpec spec;
  spec.kind = kind;
  spec.height = static_cast<std::size_t>(h);
  spec.width = static_cast<std::size_t>(w);
  spec.top = static_cast<std::size_t>(rng.below(image.height - spec.height + 1));
  spec.left = static_cast<std::size_t>(rng.below(image.width - spec.width + 1));
  spec.target_size = cfg.target_size;
  spec.area_fraction = p;
  return spec;
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

// Source taps for each output index along one axis.
std::vector<Tap> axis_taps(std::size_t src_len, std::size_t out_len) {
  std::vector<Tap> taps(out_len);
  const double ratio = static_cast<double>(src_len) / static_cast<double>(out_len);
  const double top = static_cast<double>(src_len - 1);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double s = std::clamp((static_cast<double>(i) + 0.5) * ratio - 0.5, 0.0, top);
    const auto lo = static_cast<std::size_t>(std::floor(s));
    taps[i] = {lo, std::min(lo + 1, src_len - 1), s - static_cast<double>(lo)};
  }
  return taps;
}

Image resample(const Image& image, std::size_t top, std::size_t left, std::size_t h, std::size_t w,
               std::size_t out_h, std::size_t out_w) {
  const auto ty = axis_taps(h, out_h);
  const auto tx = axis_taps(w, out_w);
  Image out(image.channels, out_h, out_w);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto& a = ty[y];
        const auto& b = tx[x];
        const double v00 = image.at(c, top + a.lo, left + b.lo), v01 = image.at(c, top + a.lo, left + b.hi);
        const double v10 = image.at(c, top + a.hi, left + b.lo), v11 = image.at(c, top + a.hi, left + b.hi);
        const double upper = v00 + (v01 - v00) * b.frac;
        const double lower = v10 + (v11 - v10) * b.frac;
        out.at(c, y, x) = upper + (lower - upper) * a.frac;
      }
  return out;
}

void check_spec(const Image& image, const ViewSpec& spec) {
  if (spec.height == 0 || spec.width == 0 || spec.top + spec.height > image.height ||
      spec.left + spec.width > image.width)
    throw Error("crop box exceeds image bounds " + shape_string(image.height, image.width));
}

}  // namespace

Image resize(const Image& image, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw Error("resize: output extents must be positive");
  return resample(image, 0, 0, image.height, image.width, out_h, out_w);
}

Image resize_crop(const Image& image, const ViewSpec& spec) {
  check_spec(image, spec);
  return resample(image, spec.top, spec.left, spec.height, spec.width, spec.target_size, spec.target_size);
}

PatchSequence patchify(const Image& square, std::size_t patch) {
  if (square.height != square.width) throw Error("patchify: expected a square image");
  if (patch == 0 || square.height % patch != 0)
    throw Error("patch size " + std::to_string(patch) + " does not divide view size " + std::to_string(square.height));
  const std::size_t g = square.height / patch, n = g * g, d = square.channels * patch * patch;
  PatchSequence seq;
  seq.patch_dim = d;
  seq.grid = g;
  seq.tokens = Matrix(d, n);
  seq.mask.assign(n, 0);
  seq.positions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t gr = i / g, gc = i % g;
    seq.positions[i] = {gr, gc};
    std::size_t k = 0;
    for (std::size_t c = 0; c < square.channels; ++c)
      for (std::size_t py = 0; py < patch; ++py)
        for (std::size_t px = 0; px < patch; ++px) seq.tokens(k++, i) = square.at(c, gr * patch + py, gc * patch + px);
  }
  return seq;
}

Image reassemble(const PatchSequence& seq, std::size_t channels, std::size_t patch) {
  const std::size_t s = seq.grid * patch;
  Image out(channels, s, s);
  for (std::size_t i = 0; i < seq.count(); ++i) {
    const auto [gr, gc] = seq.positions[i];
    std::size_t k = 0;
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t py = 0; py < patch; ++py)
        for (std::size_t px = 0; px < patch; ++px) out.at(c, gr * patch + py, gc * patch + px) = seq.tokens(k++, i);
  }
  return out;
}

PatchSequence apply_view(const Image& image, const ViewSpec& spec, std::size_t patch) {
  if (patch == 0 || spec.target_size % patch != 0)
    throw Error("patch size " + std::to_string(patch) + " does not divide view size " + std::to_string(spec.target_size));
  return patchify(resize_crop(image, spec), patch);
}

PatchSequence eval_view(const Image& image, std::size_t resize_edge, std::size_t crop_size, std::size_t patch) {
  if (crop_size > resize_edge) throw Error("eval view: crop size exceeds resize edge");
  if (patch == 0 || crop_size % patch != 0)
    throw Error("patch size " + std::to_string(patch) + " does not divide eval size " + std::to_string(crop_size));
  const double shorter = static_cast<double>(std::min(image.height, image.width));
  const double f = static_cast<double>(resize_edge) / shorter;
  const auto rh = std::max<std::size_t>(resize_edge, static_cast<std::size_t>(std::lround(image.height * f)));
  const auto rw = std::max<std::size_t>(resize_edge, static_cast<std::size_t>(std::lround(image.width * f)));
  const Image resized = resize(image, rh, rw);
  Image crop(image.channels, crop_size, crop_size);
  const std::size_t top = (rh - crop_size) / 2, left = (rw - crop_size) / 2;
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < crop_size; ++y)
      for (std::size_t x = 0; x < crop_size; ++x) crop.at(c, y, x) = resized.at(c, top + y, left + x);
  return patchify(crop, patch);
}

PatchSequence apply_mask(const PatchSequence& seq, double fraction, const std::vector<double>& mask_token, Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("mask fraction must lie in [0, 1]");
  if (mask_token.size() != seq.patch_dim)
    throw Error("mask token of length " + std::to_string(mask_token.size()) + " for token dimension " + std::to_string(seq.patch_dim));
  const std::size_t n = seq.count();
  const auto k = std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  PatchSequence out = seq;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {  // partial Fisher–Yates
    std::swap(order[i], order[i + rng.below(n - i)]);
    const std::size_t col = order[i];
    out.mask[col] = 1;
    for (std::size_t r = 0; r < seq.patch_dim; ++r) out.tokens(r, col) = mask_token[r];
  }
  return out;
}

std::vector<ViewSpec> sample_views(const Image& image, const MultiCropConfig& cfg, Rng& rng) {
  std::vector<ViewSpec> specs;
  specs.reserve(cfg.global_count + cfg.local_count);
  for (std::size_t i = 0; i < cfg.global_count; ++i) specs.push_back(sample_view(image, ViewKind::Global, cfg.global, rng));
  for (std::size_t i = 0; i < cfg.local_count; ++i) specs.push_back(sample_view(image, ViewKind::Local, cfg.local, rng));
  return specs;
}

}  // namespace simdino

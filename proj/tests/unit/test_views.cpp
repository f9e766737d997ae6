#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "simdino/views.hpp"

using namespace simdino;

namespace {
Image ramp(std::size_t c, std::size_t h, std::size_t w) {
  Image im(c, h, w);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) im.at(k, y, x) = 0.01 * static_cast<double>(k * 1000 + y * 37 + x);
  return im;
}
}  // namespace

TEST(Views, SampledBoxesFitAndRespectArea) {
  const Image im = ramp(3, 64, 48);
  const CropConfig cfg{0.2, 0.6, 0.75, 4.0 / 3.0, 16};
  Rng rng(41);
  for (int t = 0; t < 500; ++t) {
    const ViewSpec s = sample_view(im, ViewKind::Local, cfg, rng);
    ASSERT_LE(s.top + s.height, im.height);
    ASSERT_LE(s.left + s.width, im.width);
    ASSERT_GE(s.area_fraction, 0.2);
    ASSERT_LE(s.area_fraction, 0.6);
    const double area = static_cast<double>(s.height * s.width) / (64.0 * 48.0);
    // Rounding each side to whole pixels moves the area by at most about one row and one column.
    EXPECT_NEAR(area, s.area_fraction, (64.0 + 48.0 + 1.0) / (64.0 * 48.0)) << t;
  }
}

TEST(Views, SamplingIsSeedDeterministic) {
  const Image im = ramp(1, 40, 40);
  Rng a(5), b(5);
  EXPECT_EQ(sample_views(im, MultiCropConfig{}, a), sample_views(im, MultiCropConfig{}, b));
  const auto specs = sample_views(im, MultiCropConfig{}, a);
  ASSERT_EQ(specs.size(), 6u);
  EXPECT_EQ(specs[0].kind, ViewKind::Global);
  EXPECT_EQ(specs[5].kind, ViewKind::Local);
  EXPECT_EQ(specs[5].target_size, 16u);
}

TEST(Views, ResizeSameSizeIsIdentity) {
  const Image im = ramp(2, 9, 7);
  EXPECT_EQ(resize(im, 9, 7), im);
}

TEST(Views, ResizeFollowsHalfPixelConvention) {
  Image im(1, 1, 2);
  im.at(0, 0, 0) = 0.0;
  im.at(0, 0, 1) = 1.0;
  // s = (x + ½)/2 − ½ over a 2-pixel axis: −¼ → 0, ¼, ¾, 1¼ → 1
  const Image up = resize(im, 1, 4);
  EXPECT_DOUBLE_EQ(up.at(0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(up.at(0, 0, 1), 0.25);
  EXPECT_DOUBLE_EQ(up.at(0, 0, 2), 0.75);
  EXPECT_DOUBLE_EQ(up.at(0, 0, 3), 1.0);
  // Halving averages neighbouring pairs exactly.
  const Image down = resize(ramp(1, 4, 4), 2, 2);
  EXPECT_NEAR(down.at(0, 0, 0), 0.01 * (0.5 * 37 + 0.5), 1e-12);
}

TEST(Views, ResizePreservesConstantImages) {
  const Image im(3, 13, 11, 0.42);
  const Image out = resize(im, 32, 32);
  for (double v : out.pixels) EXPECT_NEAR(v, 0.42, 1e-15);
}

TEST(Views, PatchifyLayoutAndRoundTrip) {
  const Image im = ramp(3, 8, 8);
  const PatchSequence seq = patchify(im, 4);
  ASSERT_EQ(seq.count(), 4u);
  EXPECT_EQ(seq.patch_dim, 48u);
  EXPECT_EQ(seq.positions[1], (std::pair<std::size_t, std::size_t>{0, 1}));
  EXPECT_EQ(seq.positions[2], (std::pair<std::size_t, std::size_t>{1, 0}));
  // token 3 = bottom-right patch; entry (c=1, py=2, px=3)
  EXPECT_DOUBLE_EQ(seq.tokens(16 + 2 * 4 + 3, 3), im.at(1, 6, 7));
  EXPECT_EQ(reassemble(seq, 3, 4), im);
}

TEST(Views, EvalViewCentersTheCrop) {
  const Image im = ramp(1, 36, 36);
  const PatchSequence seq = eval_view(im, 36, 32, 8);
  EXPECT_EQ(seq.count(), 16u);
  EXPECT_DOUBLE_EQ(seq.tokens(0, 0), im.at(0, 2, 2));
  EXPECT_THROW(eval_view(im, 16, 32, 8), Error);
}

TEST(Views, MaskingReplacesExactCount) {
  const PatchSequence seq = patchify(ramp(1, 16, 16), 4);
  const std::vector<double> token(16, -7.0);
  Rng rng(42);
  const PatchSequence m = apply_mask(seq, 0.3, token, rng);
  EXPECT_EQ(m.masked(), 5u);  // ⌈0.3·16⌉
  for (std::size_t i = 0; i < m.count(); ++i)
    for (std::size_t r = 0; r < 16; ++r)
      EXPECT_EQ(m.tokens(r, i), m.mask[i] ? -7.0 : seq.tokens(r, i));
  EXPECT_EQ(apply_mask(seq, 0.0, token, rng).masked(), 0u);
  EXPECT_EQ(apply_mask(seq, 1.0, token, rng).masked(), 16u);
  EXPECT_THROW(apply_mask(seq, 1.5, token, rng), Error);
  EXPECT_THROW(apply_mask(seq, 0.5, std::vector<double>(3), rng), Error);
}

TEST(Views, RejectsBadConfigs) {
  const Image im = ramp(1, 16, 16);
  EXPECT_THROW(sample_view(im, ViewKind::Global, CropConfig{0.0, 1.0, 0.75, 1.3, 16}, *std::make_unique<Rng>(1)), Error);
  EXPECT_THROW(sample_view(im, ViewKind::Global, CropConfig{0.5, 0.4, 0.75, 1.3, 16}, *std::make_unique<Rng>(1)), Error);
  EXPECT_THROW(patchify(ramp(1, 10, 10), 4), Error);
  EXPECT_THROW(resize_crop(im, ViewSpec{ViewKind::Global, 10, 10, 8, 8, 16, 1.0}), Error);
  MultiCropConfig mc;
  mc.patch = 5;
  EXPECT_THROW(mc.validate(), Error);
}

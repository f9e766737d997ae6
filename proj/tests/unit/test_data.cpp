#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "simdino/data.hpp"

using namespace simdino;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("simdino_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.classes = 4;
  s.per_class = 10;
  s.size = 24;
  s.radius_min = 4;
  s.radius_max = 8;
  s.seed = 3;
  return s;
}
}  // namespace

TEST(Data, CountsAndSplits) {
  const Dataset ds = generate_synthetic(tiny_spec());
  ASSERT_EQ(ds.size(), 40u);
  EXPECT_EQ(ds.class_count, 4u);
  EXPECT_EQ(ds.indices(Split::Val).size(), 8u);
  EXPECT_EQ(ds.indices(Split::Train).size(), 32u);
  std::vector<std::size_t> val_per_class(4);
  for (auto i : ds.indices(Split::Val)) ++val_per_class[ds.labels[i]];
  for (auto c : val_per_class) EXPECT_EQ(c, 2u);
  for (const auto& im : ds.images) {
    EXPECT_EQ(im.channels, 3u);
    for (double v : im.pixels) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Data, SeedDeterminism) {
  const auto a = generate_synthetic(tiny_spec());
  const auto b = generate_synthetic(tiny_spec());
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.splits, b.splits);
  auto other = tiny_spec();
  other.seed = 4;
  EXPECT_NE(generate_synthetic(other).images, a.images);
}

TEST(Data, NoiselessImagesShowTheClassColour) {
  auto spec = tiny_spec();
  spec.noise = 0.0;
  spec.color_jitter = 0.0;
  const Dataset ds = generate_synthetic(spec);
  const auto styles = class_styles(spec);
  // Every object has at least one pixel of the exact class colour.
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& st = styles[ds.labels[i]];
    bool found = false;
    const auto& im = ds.images[i];
    for (std::size_t y = 0; y < im.height && !found; ++y)
      for (std::size_t x = 0; x < im.width && !found; ++x)
        found = im.at(0, y, x) == st.r && im.at(1, y, x) == st.g && im.at(2, y, x) == st.b;
    EXPECT_TRUE(found) << "image " << i;
  }
}

TEST(Data, ImageRoundTripAndCorruption) {
  const fs::path dir = scratch("img");
  Image im(2, 3, 4);
  for (std::size_t i = 0; i < im.pixels.size(); ++i) im.pixels[i] = static_cast<double>(i) / 23.0;
  write_image((dir / "a.img").string(), im);
  EXPECT_EQ(read_image((dir / "a.img").string()), im);
  {
    std::ofstream f(dir / "a.img", std::ios::app | std::ios::binary);
    f << "x";
  }
  EXPECT_THROW(read_image((dir / "a.img").string()), Error);
  fs::resize_file(dir / "a.img", 20);
  EXPECT_THROW(read_image((dir / "a.img").string()), Error);
  Image bad(1, 1, 1, 1.5);
  EXPECT_THROW(write_image((dir / "b.img").string(), bad), Error);
}

TEST(Data, DatasetRoundTrip) {
  const fs::path dir = scratch("ds");
  const Dataset ds = generate_synthetic(tiny_spec());
  save_dataset(dir.string(), ds);
  const Dataset back = load_dataset(dir.string());
  EXPECT_EQ(back.images, ds.images);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.splits, ds.splits);
  EXPECT_EQ(back.class_count, ds.class_count);
}

TEST(Data, ManifestErrorsNameTheLine) {
  const fs::path dir = scratch("bad");
  save_dataset(dir.string(), generate_synthetic(tiny_spec()));
  {
    std::ofstream f(dir / "manifest.txt", std::ios::app);
    f << "images/000000.img 1 holdout\n";
  }
  try {
    load_dataset(dir.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":42"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_dataset((dir / "missing").string()), Error);
}

TEST(Data, SpecValidation) {
  auto s = tiny_spec();
  s.val_fraction = 1.0;
  EXPECT_THROW(s.validate(), Error);
  s = tiny_spec();
  s.radius_max = 100;
  EXPECT_THROW(s.validate(), Error);
}

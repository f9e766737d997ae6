#pragma once

// Image datasets: the synthetic blob generator, the raw per-image binary
// format (u64 C, H, W then C·H·W f64 pixels, little-endian) and the
// plain-text manifest ("path label split" per line).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "simdino/views.hpp"

namespace simdino {

enum class Split { Train, Val };
const char* to_string(Split s);
Split parse_split(const std::string& s);

struct Dataset {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::vector<Split> splits;
  std::size_t class_count = 0;

  std::size_t size() const { return images.size(); }
  std::vector<std::size_t> indices(Split s) const;
  void validate() const;
};

/// Per-class appearance. Shapes: 0 disc, 1 square, 2 striped disc, 3 ring.
struct ClassStyle {
  double r = 0, g = 0, b = 0;
  int shape = 0;
};

struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t per_class = 100;
  std::size_t size = 64;
  double noise = 0.05;          // per-pixel Gaussian σ
  double color_jitter = 0.05;   // per-image uniform ± on the object colour
  double radius_min = 10.0, radius_max = 18.0;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Fixed palette/shape table; classes beyond it get seeded random styles.
std::vector<ClassStyle> class_styles(const SyntheticSpec& spec);

/// 3-channel images of one coloured object on a grey noisy background.
/// Each class keeps exactly round(val_fraction·per_class) images for validation.
Dataset generate_synthetic(const SyntheticSpec& spec);

void write_image(const std::string& path, const Image& image);
Image read_image(const std::string& path);

/// Writes images/NNNNNN.img and manifest.txt under dir.
void save_dataset(const std::string& dir, const Dataset& ds);
/// Reads dir/manifest.txt; image paths are relative to dir.
Dataset load_dataset(const std::string& dir);

}  // namespace simdino

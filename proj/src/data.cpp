#include "simdino/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "simdino/binary_io.hpp"

namespace simdino {

const char* to_string(Split s) { return s == Split::Train ? "train" : "val"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  throw Error("unknown split '" + s + "' (train | val)");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

void Dataset::validate() const {
  if (images.empty()) throw Error("dataset is empty");
  if (labels.size() != images.size() || splits.size() != images.size())
    throw Error("dataset: labels/splits do not match the image count");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (labels[i] >= class_count) throw Error("dataset: label " + std::to_string(labels[i]) + " of image " + std::to_string(i) + " exceeds class count");
    if (images[i].channels != images[0].channels) throw Error("dataset: channel count differs at image " + std::to_string(i));
  }
}

void SyntheticSpec::validate() const {
  if (classes == 0 || per_class == 0) throw Error("synthetic spec: classes and per_class must be positive");
  if (size < 8) throw Error("synthetic spec: image size must be at least 8");
  if (!(noise >= 0.0) || !(color_jitter >= 0.0)) throw Error("synthetic spec: noise levels must be ≥ 0");
  if (!(radius_min > 0.0 && radius_min <= radius_max && radius_max < static_cast<double>(size) / 2))
    throw Error("synthetic spec: need 0 < radius_min ≤ radius_max < size/2");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw Error("synthetic spec: val_fraction must lie in [0, 1)");
}

std::vector<ClassStyle> class_styles(const SyntheticSpec& spec) {
  static const ClassStyle table[] = {
      {0.90, 0.15, 0.15, 0}, {0.15, 0.80, 0.20, 1}, {0.20, 0.30, 0.95, 2}, {0.95, 0.85, 0.10, 3},
      {0.80, 0.20, 0.85, 1}, {0.10, 0.85, 0.85, 2}, {0.95, 0.55, 0.10, 3}, {0.55, 0.55, 0.55, 0},
  };
  std::vector<ClassStyle> styles;
  Rng rng(spec.seed ^ 0x5eedc1a55ULL);
  for (std::size_t k = 0; k < spec.classes; ++k) {
    if (k < std::size(table)) {
      styles.push_back(table[k]);
    } else {
      styles.push_back({rng.uniform(), rng.uniform(), rng.uniform(), static_cast<int>(rng.below(4))});
    }
  }
  return styles;
}

namespace {

bool inside(int shape, double dy, double dx, double radius, double y) {
  const double dist = std::sqrt(dy * dy + dx * dx);
  switch (shape) {
    case 0: return dist <= radius;
    case 1: return std::max(std::abs(dy), std::abs(dx)) <= 0.85 * radius;
    case 2: return dist <= radius && static_cast<long>(std::floor(y / 4.0)) % 2 == 0;
    default: return dist <= radius && dist >= 0.55 * radius;
  }
}

Image render(const SyntheticSpec& spec, const ClassStyle& style, Rng& rng) {
  const std::size_t s = spec.size;
  Image img(3, s, s);
  const double grey = rng.uniform(0.2, 0.5);
  const double radius = rng.uniform(spec.radius_min, spec.radius_max);
  const double cy = rng.uniform(radius, static_cast<double>(s) - radius);
  const double cx = rng.uniform(radius, static_cast<double>(s) - radius);
  const double colour[3] = {style.r + rng.uniform(-spec.color_jitter, spec.color_jitter),
                            style.g + rng.uniform(-spec.color_jitter, spec.color_jitter),
                            style.b + rng.uniform(-spec.color_jitter, spec.color_jitter)};
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double py = static_cast<double>(y) + 0.5, px = static_cast<double>(x) + 0.5;
      const bool in = inside(style.shape, py - cy, px - cx, radius, py);
      for (std::size_t c = 0; c < 3; ++c) {
        double v = in ? colour[c] : grey;
        if (spec.noise > 0.0) v += spec.noise * rng.normal();
        img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  return img;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto styles = class_styles(spec);
  Rng rng(spec.seed);
  Dataset ds;
  ds.class_count = spec.classes;
  const auto val_count = static_cast<std::size_t>(std::lround(spec.val_fraction * static_cast<double>(spec.per_class)));
  for (std::size_t k = 0; k < spec.classes; ++k) {
    std::vector<std::size_t> order(spec.per_class);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<Split> split(spec.per_class, Split::Train);
    for (std::size_t i = 0; i < val_count; ++i) split[order[i]] = Split::Val;
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      ds.images.push_back(render(spec, styles[k], rng));
      ds.labels.push_back(k);
      ds.splits.push_back(split[i]);
    }
  }
  return ds;
}

void write_image(const std::string& path, const Image& image) {
  if (image.pixels.size() != image.channels * image.height * image.width)
    throw Error(path + ": pixel count does not match the image extents");
  for (double v : image.pixels)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(path + ": pixel value outside [0, 1]");
  std::ostringstream os;
  BinaryWriter w(os);
  w.u64(image.channels);
  w.u64(image.height);
  w.u64(image.width);
  w.f64s(image.pixels);
  write_file_atomic(path, os.str());
}

Image read_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open image '" + path + "'");
  BinaryReader r(is, path);
  const auto c = r.u64(), h = r.u64(), w = r.u64();
  if (c == 0 || h == 0 || w == 0 || c * h * w > (std::size_t{1} << 28))
    throw Error(path + ": implausible image header " + std::to_string(c) + "×" + std::to_string(h) + "×" + std::to_string(w));
  Image img(c, h, w);
  img.pixels = r.f64s(c * h * w);
  r.expect_end();
  for (double v : img.pixels)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(path + ": pixel value outside [0, 1]");
  return img;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  ds.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw Error("cannot create dataset directory '" + dir + "': " + ec.message());
  std::ostringstream manifest;
  manifest << "# path label split\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "images/%06zu.img", i);
    write_image((fs::path(dir) / name).string(), ds.images[i]);
    manifest << name << ' ' << ds.labels[i] << ' ' << to_string(ds.splits[i]) << '\n';
  }
  write_file_atomic((fs::path(dir) / "manifest.txt").string(), manifest.str());
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto manifest_path = (fs::path(dir) / "manifest.txt").string();
  std::istringstream in(read_file(manifest_path));
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string path, split, extra;
    long long label = -1;
    if (!(fields >> path >> label >> split) || (fields >> extra) || label < 0)
      throw Error(manifest_path + ":" + std::to_string(lineno) + ": expected 'path label split'");
    ds.images.push_back(read_image((fs::path(dir) / path).string()));
    ds.labels.push_back(static_cast<std::size_t>(label));
    try {
      ds.splits.push_back(parse_split(split));
    } catch (const Error& e) {
      throw Error(manifest_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ds.class_count = std::max(ds.class_count, static_cast<std::size_t>(label) + 1);
  }
  ds.validate();
  return ds;
}

}  // namespace simdino

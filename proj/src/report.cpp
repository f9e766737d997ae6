#include "simdino/report.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "simdino/binary_io.hpp"
#include "simdino/matrix.hpp"

namespace simdino {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

MetricsLog read_metrics_csv(const std::string& path, const std::string& name) {
  std::istringstream in(read_file(path));
  MetricsLog log;
  log.name = name;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (log.columns.empty()) {
      if (cells.empty() || cells[0] != "step") throw Error(path + ": first column must be 'step'");
      log.columns = std::move(cells);
      continue;
    }
    if (cells.size() != log.columns.size())
      throw Error(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(log.columns.size()) + " cells");
    log.rows.push_back(std::move(cells));
  }
  if (log.columns.empty()) throw Error(path + ": missing header");
  return log;
}

Report build_report(const std::vector<MetricsLog>& logs) {
  if (logs.empty()) throw Error("report needs at least one metrics log");
  Report r;
  for (const auto& log : logs)
    for (std::size_t c = 1; c < log.columns.size(); ++c)
      if (std::find(r.metrics.begin(), r.metrics.end(), log.columns[c]) == r.metrics.end()) r.metrics.push_back(log.columns[c]);

  r.aligned_steps = logs.front().rows.size();
  for (const auto& log : logs) {
    r.truncated = r.truncated || log.rows.size() != logs.front().rows.size();
    r.aligned_steps = std::min(r.aligned_steps, log.rows.size());
  }
  if (r.truncated)
    r.warnings.push_back("logs differ in length; aligned to the shortest (" + std::to_string(r.aligned_steps) + " rows)");

  std::vector<std::vector<long>> index(logs.size());  // column of each metric in each log, −1 if absent
  for (std::size_t l = 0; l < logs.size(); ++l)
    for (const auto& m : r.metrics) {
      const auto it = std::find(logs[l].columns.begin() + 1, logs[l].columns.end(), m);
      index[l].push_back(it == logs[l].columns.end() ? -1 : it - logs[l].columns.begin());
      if (it == logs[l].columns.end()) r.warnings.push_back("log '" + logs[l].name + "' has no column '" + m + "'; left blank");
    }

  r.header.push_back("step");
  const bool single = logs.size() == 1;
  for (const auto& m : r.metrics)
    for (const auto& log : logs) r.header.push_back(single ? m : log.name + ":" + m);

  for (std::size_t i = 0; i < r.aligned_steps; ++i) {
    std::vector<std::string> row{logs.front().rows[i][0]};
    for (const auto& log : logs)
      if (log.rows[i][0] != row[0])
        throw Error("log '" + log.name + "' row " + std::to_string(i) + " has step " + log.rows[i][0] + ", expected " + row[0]);
    for (std::size_t m = 0; m < r.metrics.size(); ++m)
      for (std::size_t l = 0; l < logs.size(); ++l) row.push_back(index[l][m] < 0 ? "" : logs[l].rows[i][static_cast<std::size_t>(index[l][m])]);
    r.rows.push_back(std::move(row));
  }
  return r;
}

std::string report_csv(const Report& r) {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += '\n';
  };
  emit(r.header);
  for (const auto& row : r.rows) emit(row);
  return out;
}

// --- raster ----------------------------------------------------------------

Raster::Raster(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 255) {}

void Raster::set(long x, long y, unsigned char r, unsigned char g, unsigned char b) {
  if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height)) return;
  unsigned char* p = &rgb[(static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * 3];
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

void Raster::line(double x0, double y0, double x1, double y1, const unsigned char colour[3]) {
  const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    set(std::lround(x0 + t * (x1 - x0)), std::lround(y0 + t * (y1 - y0)), colour[0], colour[1], colour[2]);
  }
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t len) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(data), len);
}

}  // namespace

std::string encode_png(const Raster& img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  std::string out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    throw Error("png: encoding failed");
  }
  png_set_write_fn(png, &out, append_bytes, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y) png_write_row(png, img.rgb.data() + y * img.width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Raster plot_metric(const Report& r, const std::vector<std::string>& runs, const std::string& metric, std::size_t width,
                   std::size_t height) {
  static const unsigned char palette[][3] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189}, {23, 190, 207}};
  Raster img(width, height);
  const double left = 40, right = static_cast<double>(width) - 10, top = 10, bottom = static_cast<double>(height) - 30;

  std::vector<long> cols;
  for (const auto& run : runs) {
    const std::string key = runs.size() == 1 ? metric : run + ":" + metric;
    const auto it = std::find(r.header.begin(), r.header.end(), key);
    cols.push_back(it == r.header.end() ? -1 : it - r.header.begin());
  }
  double lo = INFINITY, hi = -INFINITY, smin = INFINITY, smax = -INFINITY;
  for (const auto& row : r.rows) {
    const double s = std::strtod(row[0].c_str(), nullptr);
    smin = std::min(smin, s);
    smax = std::max(smax, s);
    for (long c : cols)
      if (c >= 0 && !row[static_cast<std::size_t>(c)].empty()) {
        const double v = std::strtod(row[static_cast<std::size_t>(c)].c_str(), nullptr);
        if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
      }
  }
  const unsigned char axis[3] = {0, 0, 0};
  img.line(left, top, left, bottom, axis);
  img.line(left, bottom, right, bottom, axis);
  if (!std::isfinite(lo) || r.rows.empty()) return img;
  if (hi == lo) hi = lo + 1.0;
  if (smax == smin) smax = smin + 1.0;
  auto px = [&](double s) { return left + (s - smin) / (smax - smin) * (right - left); };
  auto py = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };

  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] < 0) continue;
    const auto* colour = palette[k % std::size(palette)];
    bool have = false;
    double x_prev = 0, y_prev = 0;
    for (const auto& row : r.rows) {
      const auto& cell = row[static_cast<std::size_t>(cols[k])];
      if (cell.empty()) continue;
      const double v = std::strtod(cell.c_str(), nullptr);
      if (!std::isfinite(v)) continue;
      const double x = px(std::strtod(row[0].c_str(), nullptr)), y = py(v);
      if (have) img.line(x_prev, y_prev, x, y, colour);
      x_prev = x;
      y_prev = y;
      have = true;
    }
  }
  return img;
}

}  // namespace simdino

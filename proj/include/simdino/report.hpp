#pragma once

// Comparison of metrics logs: step-aligned CSV and one PNG line plot per metric.

#include <cstddef>
#include <string>
#include <vector>

namespace simdino {

struct MetricsLog {
  std::string name;
  std::vector<std::string> columns;              // first column is "step"
  std::vector<std::vector<std::string>> rows;
};

MetricsLog read_metrics_csv(const std::string& path, const std::string& name);

struct Report {
  std::vector<std::string> header;               // step, then "<run>:<metric>"
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> metrics;              // union of metric columns, first-seen order
  std::size_t aligned_steps = 0;
  bool truncated = false;                        // some log was longer than the shortest
  std::vector<std::string> warnings;
};

/// Aligns logs row by row up to the shortest one. A metric missing from a log
/// yields blank cells and a warning. Rows whose step values disagree are rejected.
Report build_report(const std::vector<MetricsLog>& logs);
std::string report_csv(const Report& r);

/// RGB raster for line plots; encode_png writes it through libpng.
struct Raster {
  std::size_t width = 0, height = 0;
  std::vector<unsigned char> rgb;

  Raster(std::size_t w, std::size_t h);
  void set(long x, long y, unsigned char r, unsigned char g, unsigned char b);
  void line(double x0, double y0, double x1, double y1, const unsigned char colour[3]);
};

std::string encode_png(const Raster& img);

/// One line per run for `metric`; blank cells are skipped.
Raster plot_metric(const Report& r, const std::vector<std::string>& runs, const std::string& metric,
                   std::size_t width = 640, std::size_t height = 400);

}  // namespace simdino

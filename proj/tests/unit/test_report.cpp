#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "simdino/matrix.hpp"
#include "simdino/report.hpp"

using namespace simdino;
namespace fs = std::filesystem;

namespace {
MetricsLog log_of(std::string name, std::vector<std::string> cols, std::vector<std::vector<std::string>> rows) {
  return {std::move(name), std::move(cols), std::move(rows)};
}
}  // namespace

TEST(Report, SingleLogPassesThrough) {
  const auto r = build_report({log_of("a", {"step", "loss"}, {{"0", "1.5"}, {"1", "1.25"}})});
  EXPECT_EQ(r.header, (std::vector<std::string>{"step", "loss"}));
  EXPECT_EQ(report_csv(r), "step,loss\n0,1.5\n1,1.25\n");
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Report, TruncatesToShortestLog) {
  const auto r = build_report({log_of("a", {"step", "loss"}, {{"0", "1"}, {"1", "2"}, {"2", "3"}}),
                               log_of("b", {"step", "loss"}, {{"0", "4"}, {"1", "5"}})});
  EXPECT_TRUE(r.truncated);
  EXPECT_EQ(r.aligned_steps, 2u);
  EXPECT_EQ(report_csv(r), "step,a:loss,b:loss\n0,1,4\n1,2,5\n");
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Report, UnionOfColumnsWithBlanks) {
  const auto r = build_report({log_of("a", {"step", "loss", "gamma"}, {{"0", "1", "0.1"}}),
                               log_of("b", {"step", "loss", "lr"}, {{"0", "2", "0.01"}})});
  EXPECT_EQ(r.metrics, (std::vector<std::string>{"loss", "gamma", "lr"}));
  EXPECT_EQ(report_csv(r), "step,a:loss,b:loss,a:gamma,b:gamma,a:lr,b:lr\n0,1,2,0.1,,,0.01\n");
  EXPECT_EQ(r.warnings.size(), 2u);
}

TEST(Report, RejectsMisalignedSteps) {
  EXPECT_THROW(build_report({log_of("a", {"step", "x"}, {{"0", "1"}}), log_of("b", {"step", "x"}, {{"5", "1"}})}), Error);
  EXPECT_THROW(build_report({}), Error);
}

TEST(Report, ReadsCsvAndRejectsRaggedRows) {
  const fs::path p = fs::temp_directory_path() / "simdino_test_metrics.csv";
  std::ofstream(p) << "step,loss\n0,1.0\n1,0.5\n";
  const auto log = read_metrics_csv(p.string(), "run");
  EXPECT_EQ(log.rows.size(), 2u);
  EXPECT_EQ(log.rows[1][1], "0.5");
  std::ofstream(p) << "step,loss\n0\n";
  EXPECT_THROW(read_metrics_csv(p.string(), "run"), Error);
  std::ofstream(p) << "loss,step\n";
  EXPECT_THROW(read_metrics_csv(p.string(), "run"), Error);
}

TEST(Report, PlotIsAPng) {
  const auto r = build_report({log_of("a", {"step", "loss"}, {{"0", "1"}, {"1", "0.5"}, {"2", ""}}),
                               log_of("b", {"step", "loss"}, {{"0", "2"}, {"1", "1"}, {"2", "0.1"}})});
  const std::string png = encode_png(plot_metric(r, {"a", "b"}, "loss", 120, 80));
  ASSERT_GT(png.size(), 8u);
  EXPECT_EQ(png.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
}

#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace simdino {

/// Seeded generator whose derived draws are computed here rather than by the
/// standard distributions, so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  /// Normal(0, sigma) redrawn until it lies within ±2 sigma.
  double truncated_normal(double sigma);

  /// Independent generator for a sub-task, derived from this one's next draw.
  Rng split() { return Rng(next() ^ 0x9e3779b97f4a7c15ULL); }

  std::string state() const;
  void set_state(const std::string& s);

  bool operator==(const Rng& o) const { return engine_ == o.engine_ && cached_ == o.cached_ && has_cached_ == o.has_cached_; }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace simdino

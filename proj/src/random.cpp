#include "simdino/random.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>

#include "simdino/matrix.hpp"

namespace simdino {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error("Rng::below(0)");
  const std::uint64_t limit = n * (UINT64_MAX / n);
  for (;;) {
    const std::uint64_t x = engine_();
    if (x < limit) return x % n;
  }
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  cached_ = radius * std::sin(2.0 * std::numbers::pi * u2);
  has_cached_ = true;
  return radius * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double sigma) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return sigma * z;
  }
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << (has_cached_ ? 1 : 0) << ' ' << std::bit_cast<std::uint64_t>(cached_);
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  int flag = 0;
  std::uint64_t bits = 0;
  is >> engine_ >> flag >> bits;
  if (!is) throw Error("Rng: malformed state string");
  has_cached_ = flag != 0;
  cached_ = std::bit_cast<double>(bits);
}

}  // namespace simdino

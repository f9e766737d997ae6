#include "simdino/theorem.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace simdino {

Matrix random_unit_columns(std::size_t d, std::size_t n, Rng& rng) {
  Matrix z(d, n);
  for (std::size_t c = 0; c < n; ++c) {
    double s = 0.0;
    do {
      s = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        z(r, c) = rng.normal();
        s += z(r, c) * z(r, c);
      }
    } while (s < 1e-20);
    const double inv = 1.0 / std::sqrt(s);
    for (std::size_t r = 0; r < d; ++r) z(r, c) *= inv;
  }
  return z;
}

double relative_error(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw Error("relative_error: shape mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  const double scale = std::max({frobenius_norm(a), frobenius_norm(b), 1e-300});
  return std::sqrt(diff) / scale;
}

Matrix coding_rate_grad_fd(const Matrix& z, const CodingRateConfig& cfg, double h) {
  Matrix g(z.rows, z.cols);
  Matrix probe = z;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double saved = probe.data[i];
    probe.data[i] = saved + h;
    const double up = coding_rate_unchecked(probe, cfg);
    probe.data[i] = saved - h;
    const double down = coding_rate_unchecked(probe, cfg);
    probe.data[i] = saved;
    g.data[i] = (up - down) / (2.0 * h);
  }
  return g;
}

namespace {

double trial_norm(std::size_t d, std::size_t n, double eps, std::uint64_t seed, std::size_t t) {
  Rng rng(seed + t);
  return frobenius_norm(coding_rate_grad(random_unit_columns(d, n, rng), {eps, false}));
}

}  // namespace

namespace serial {
GradNormSearch max_grad_norm(std::size_t d, std::size_t n, double eps, std::size_t trials, std::uint64_t seed) {
  GradNormSearch best;
  for (std::size_t t = 0; t < trials; ++t) {
    const double v = trial_norm(d, n, eps, seed, t);
    if (v > best.max_norm) best = {v, t};
  }
  return best;
}
}  // namespace serial

namespace parallel {
GradNormSearch max_grad_norm(std::size_t d, std::size_t n, double eps, std::size_t trials, std::uint64_t seed) {
  std::vector<double> norms(trials);
  const auto count = static_cast<std::ptrdiff_t>(trials);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t t = 0; t < count; ++t) norms[t] = trial_norm(d, n, eps, seed, t);
  GradNormSearch best;
  for (std::size_t t = 0; t < trials; ++t)
    if (norms[t] > best.max_norm) best = {norms[t], t};
  return best;
}
}  // namespace parallel

bool VerifyPoint::sandwich_ok() const {
  if (!sandwich_applicable) return true;
  // The construction puts r−1 terms at the peak 1/(4α); allow rounding in the sum only.
  const double slack = 1e-12 * sandwich_upper;
  return sandwich_value >= sandwich_lower - slack && sandwich_value <= sandwich_upper + slack;
}

VerifyPoint verify_point(std::size_t d, std::size_t n, double eps, std::size_t trials, std::uint64_t seed,
                         std::size_t fd_checks) {
  VerifyPoint p;
  p.d = d;
  p.n = n;
  p.eps = eps;
  p.trials = trials;

  Rng fd_rng(seed ^ 0x5bd1e995ULL);
  const CodingRateConfig cfg{eps, false};
  for (std::size_t k = 0; k < fd_checks; ++k) {
    const Matrix z = random_unit_columns(d, n, fd_rng);
    p.fd_rel_err = std::max(p.fd_rel_err, relative_error(coding_rate_grad(z, cfg), coding_rate_grad_fd(z, cfg)));
  }

  const auto search = parallel::max_grad_norm(d, n, eps, trials, seed);
  p.empirical_max = search.max_norm;
  p.bound = grad_norm_bound(d, n, eps);
  p.ratio = p.empirical_max / p.bound;
  p.quarter_bound = quarter_constant_bound(d, n, eps);
  p.quarter_ratio = p.empirical_max / p.quarter_bound;
  p.empirical_constant = p.empirical_max * eps /
                         std::sqrt(static_cast<double>(d) * static_cast<double>(std::min(d, n)) / static_cast<double>(n));

  if (eps * eps <= extremal_eps_sq_threshold(d, n)) {
    const auto s = extremal_spectrum(d, n, eps);
    p.sandwich_applicable = true;
    p.sandwich_value = s.objective();
    p.sandwich_lower = s.lower();
    p.sandwich_upper = s.upper();
  }
  return p;
}

std::vector<VerifyPoint> verify_grid(const std::vector<std::size_t>& ds, const std::vector<std::size_t>& ns,
                                     const std::vector<double>& epss, std::size_t trials, std::uint64_t seed) {
  if (ds.empty() || ns.empty() || epss.empty() || trials == 0) throw Error("verify: empty grid or zero trials");
  std::vector<VerifyPoint> out;
  std::uint64_t point_seed = seed;
  for (auto d : ds)
    for (auto n : ns)
      for (auto e : epss) {
        if (d == 0 || n < 2 || !(e > 0.0)) throw Error("verify: grid values must be positive (n ≥ 2)");
        out.push_back(verify_point(d, n, e, trials, point_seed));
        point_seed += 1'000'003ULL * trials;
      }
  return out;
}

void write_verify_csv(std::ostream& os, const std::vector<VerifyPoint>& points) {
  os.precision(10);
  os << "d,n,eps,trials,fd_rel_err,empirical_max,bound,ratio,quarter_bound,quarter_ratio,empirical_constant,"
        "sandwich_applicable,sandwich_value,sandwich_lower,sandwich_upper,ok\n";
  double max_ratio = 0.0, max_quarter = 0.0, max_const = 0.0;
  std::size_t violations = 0;
  for (const auto& p : points) {
    os << p.d << ',' << p.n << ',' << p.eps << ',' << p.trials << ',' << p.fd_rel_err << ',' << p.empirical_max << ','
       << p.bound << ',' << p.ratio << ',' << p.quarter_bound << ',' << p.quarter_ratio << ',' << p.empirical_constant
       << ',' << (p.sandwich_applicable ? 1 : 0) << ',' << p.sandwich_value << ',' << p.sandwich_lower << ','
       << p.sandwich_upper << ',' << (p.ok() ? 1 : 0) << '\n';
    max_ratio = std::max(max_ratio, p.ratio);
    max_quarter = std::max(max_quarter, p.quarter_ratio);
    max_const = std::max(max_const, p.empirical_constant);
    violations += p.ok() ? 0 : 1;
  }
  os << "# certified constant " << kCertifiedGradConstant << " (bound = C*sqrt(d*min(d,n)/n)/eps)\n";
  os << "# max ratio to certified bound " << max_ratio << "\n";
  os << "# max ratio to constant-1/4 bound " << max_quarter
     << (max_quarter > 1.0 ? " (constant 1/4 is violated)" : "") << "\n";
  os << "# max empirical constant " << max_const << "\n";
  os << "# failing grid points " << violations << "\n";
}

}  // namespace simdino

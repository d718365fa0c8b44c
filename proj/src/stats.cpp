#include "capgen/stats.hpp"

#include <algorithm>
#include <cmath>

#include "capgen/errors.hpp"

namespace capgen {

double t_quantile_975(std::size_t df) {
  static const double table[] = {
      12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
      2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
      2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (df == 0) throw ContractError("t quantile needs df >= 1");
  if (df <= 30) return table[df - 1];
  if (df <= 60) return 2.000;
  if (df <= 120) return 1.980;
  return 1.960;
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw ContractError("summarize: empty sample");
  Summary s;
  s.n = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n < 2) {
    s.insufficient_n = true;
    s.ci_low = s.ci_high = s.mean;
    return s;
  }
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(s.n - 1));
  s.ci_half_width = t_quantile_975(s.n - 1) * s.stddev / std::sqrt(static_cast<double>(s.n));
  s.ci_low = s.mean - s.ci_half_width;
  s.ci_high = s.mean + s.ci_half_width;
  return s;
}

double quantile_linear(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ContractError("quantile of empty sample");
  if (q < 0.0 || q > 1.0) throw ContractError("quantile q outside [0,1]");
  double pos = q * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

PairedTestResult paired_test(const std::vector<double>& a, const std::vector<double>& b,
                             PairedMethod method, std::size_t iters, Rng& rng) {
  if (a.size() != b.size()) throw ContractError("paired_test: arm lengths differ");
  PairedTestResult r;
  std::size_t n = a.size();
  if (n < 2) {
    r.insufficient_n = true;
    return r;
  }
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  for (double d : diff) r.mean_diff += d;
  r.mean_diff /= static_cast<double>(n);

  std::size_t hits = 0;
  if (method == PairedMethod::bootstrap) {
    if (r.mean_diff == 0.0) {
      r.p = 1.0;
      return r;
    }
    for (std::size_t it = 0; it < iters; ++it) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += diff[rng.below(n)];
      m /= static_cast<double>(n);
      // Resample mean crossing (or touching) zero counts against the
      // observed direction.
      if (m * r.mean_diff <= 0.0) ++hits;
    }
  } else {
    double target = std::fabs(r.mean_diff);
    for (std::size_t it = 0; it < iters; ++it) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += (rng.next_u32() & 1u) ? diff[i] : -diff[i];
      m /= static_cast<double>(n);
      if (std::fabs(m) >= target) ++hits;
    }
  }
  r.p = static_cast<double>(hits) / static_cast<double>(iters);
  return r;
}

}  // namespace capgen

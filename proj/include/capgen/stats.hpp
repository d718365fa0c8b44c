#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "capgen/rng.hpp"

namespace capgen {

// Two-sided 95% Student t quantile for df degrees of freedom.
double t_quantile_975(std::size_t df);

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;       // sample (n-1); 0 when n < 2
  double ci_half_width = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool insufficient_n = false;  // n < 2: mean only, no spread
};

Summary summarize(const std::vector<double>& values);

// Linear-interpolation quantile of a sorted sample, q in [0,1].
double quantile_linear(const std::vector<double>& sorted, double q);

enum class PairedMethod { bootstrap, randomization };

struct PairedTestResult {
  double p = 1.0;
  double mean_diff = 0.0;
  bool insufficient_n = false;  // fewer than 2 pairs
};

// Paired significance test on per-item score differences a[i] - b[i].
// bootstrap: resample pairs with replacement, p = fraction of resample means
// whose sign differs from (or zeroes) the observed mean difference.
// randomization: random sign flips, p = fraction with |mean| >= |observed|.
PairedTestResult paired_test(const std::vector<double>& a, const std::vector<double>& b,
                             PairedMethod method, std::size_t iters, Rng& rng);

}  // namespace capgen

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace ladderlab {

// Five-point first and second derivatives from samples at x-2h, x-h, x, x+h, x+2h.
inline double d1_5(const std::array<double, 5>& f, double h) { return (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h); }
inline double d2_5(const std::array<double, 5>& f, double h) {
  return (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h);
}

/// Five-point derivatives (first or second) of a vector-valued g at x. Steps h_max 2^-j
/// are tried and, per component, the estimate that changed least from the previous level
/// is kept: truncation dominates at large steps, rounding at small ones.
template <typename G>
std::vector<double> adaptive_derivative(G&& g, double x, double h_max, int which, int levels = 8) {
  std::vector<double> best, prev, best_change;
  double h = h_max;
  for (int j = 0; j < levels; ++j, h *= 0.5) {
    std::array<std::vector<double>, 5> f;
    for (int k = -2; k <= 2; ++k) f[static_cast<std::size_t>(k + 2)] = g(x + k * h);
    const std::size_t n = f[2].size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::array<double, 5> fi{f[0][i], f[1][i], f[2][i], f[3][i], f[4][i]};
      d[i] = which == 1 ? d1_5(fi, h) : d2_5(fi, h);
    }
    if (j == 0) {
      best = d;
      best_change.assign(n, std::numeric_limits<double>::infinity());
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const double change = std::abs(d[i] - prev[i]);
        if (change < best_change[i]) {
          best_change[i] = change;
          best[i] = d[i];
        }
      }
    }
    prev = std::move(d);
  }
  return best;
}

}  // namespace ladderlab

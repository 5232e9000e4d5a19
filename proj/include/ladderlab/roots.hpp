#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include "ladderlab/errors.hpp"
#include "ladderlab/polynomial.hpp"

namespace ladderlab {

struct RealRoot {
  double value;
  int multiplicity;
};

namespace detail {

// Newton on p starting at x0; returns the last iterate.
inline double newton_polish(const Polynomial<double>& p, double x0, int max_iter = 60) {
  const Polynomial<double> dp = p.derivative();
  double x = x0;
  for (int it = 0; it < max_iter; ++it) {
    const double f = p(x);
    if (f == 0.0) break;
    const double df = dp(x);
    if (df == 0.0 || !std::isfinite(df)) break;
    const double step = f / df;
    if (!std::isfinite(step)) break;
    x -= step;
    if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(x), 1e-300)) break;
  }
  return x;
}

inline std::vector<std::complex<double>> companion_roots(const Polynomial<double>& p, double& scale) {
  const std::size_t n = p.degree();
  const double lead = p.leading();
  // Rescale V = scale * u so that the monic u-polynomial has coefficients of order one.
  scale = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = std::abs(p[k] / lead);
    if (a > 0.0) scale = std::max(scale, std::pow(a, 1.0 / static_cast<double>(n - k)));
  }
  if (scale == 0.0) scale = 1.0;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) companion(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double b = (p[k] / lead) / std::pow(scale, static_cast<double>(n - k));
    companion(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n - 1)) = -b;
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<std::complex<double>> z;
  z.reserve(n);
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) z.push_back(solver.eigenvalues()[i] * scale);
  return z;
}

struct RootResolver {
  const Polynomial<double>& p;
  // Same degree as p, non-negative coefficients bounding the terms that produced p's
  // coefficients; residual tolerances scale with it.
  const Polynomial<double>& magnitude;
  const std::vector<std::complex<double>>& eigenvalues;
  double scale;
  std::vector<RealRoot>& out;

  static constexpr double kClusterTol = 1e-14;
  static constexpr double kSimpleTol = 1e-13;
  static constexpr double kRealTol = 1e-6;
  static constexpr double kShapeTol = 0.1;

  // Tries to certify the group (indices into eigenvalues) as one real root of multiplicity m.
  bool try_cluster(const std::vector<std::size_t>& group) const {
    const int m = static_cast<int>(group.size());
    double mean = 0.0;
    for (std::size_t i : group) mean += eigenvalues[i].real();
    mean /= m;
    const Polynomial<double> target = p.derivative(static_cast<std::size_t>(m - 1));
    const double r = newton_polish(target, mean);
    if (!std::isfinite(r)) return false;
    if (std::abs(r - mean) > 0.05 * (std::abs(mean) + 1e-3 * scale)) return false;
    // Converged Newton leaves a rounding-level step; near a root of higher multiplicity the
    // step stays large.
    const double last_step = target(r) / target.derivative()(r);
    if (std::isfinite(last_step) && std::abs(last_step) > 1e-9 * std::max(std::abs(r), 1e-3 * scale)) return false;
    for (int k = 0; k < m - (m > 1 ? 1 : 0); ++k) {
      const auto order = static_cast<std::size_t>(k);
      const Polynomial<double> dk = p.derivative(order);
      const double tol = (m == 1 ? kSimpleTol : kClusterTol) * std::max(magnitude.derivative(order).magnitude_at(r), 1e-300);
      if (std::abs(dk(r)) > tol) return false;
    }
    if (m == 1) {
      const auto& z = eigenvalues[group.front()];
      if (std::abs(z.imag()) > kRealTol * (std::abs(z) + 1e-3 * scale)) return false;
    } else {
      // A genuine m-fold root has p^(m)(r) = m! lead prod_{j outside}(r - z_j); a simple root
      // sitting next to a multiple one passes the vanishing tests but not this one.
      std::complex<double> expected = p.leading();
      for (int k = 2; k <= m; ++k) expected *= static_cast<double>(k);
      for (std::size_t j = 0; j < eigenvalues.size(); ++j) {
        if (std::find(group.begin(), group.end(), j) == group.end()) expected *= (r - eigenvalues[j]);
      }
      const double actual = p.derivative(static_cast<std::size_t>(m))(r);
      if (std::abs(actual - expected) > kShapeTol * std::abs(expected)) return false;
    }
    out.push_back({r, m});
    return true;
  }

  void resolve(std::vector<std::size_t> group) {
    if (group.empty()) return;
    if (try_cluster(group)) return;
    if (group.size() == 1) return;
    std::sort(group.begin(), group.end(),
              [this](std::size_t a, std::size_t b) { return eigenvalues[a].real() < eigenvalues[b].real(); });
    // Split at the widest gap; conjugate pairs share a real part, so they stay together
    // unless they are the only members.
    std::size_t cut = 1;
    double widest = -1.0;
    for (std::size_t i = 1; i < group.size(); ++i) {
      const auto a = eigenvalues[group[i - 1]], b = eigenvalues[group[i]];
      const bool conjugates = a.imag() != 0.0 && std::abs(b - std::conj(a)) <= 1e-12 * scale;
      if (conjugates && group.size() > 2) continue;
      const double gap = std::abs(b - a);
      if (gap > widest) {
        widest = gap;
        cut = i;
      }
    }
    resolve({group.begin(), group.begin() + static_cast<std::ptrdiff_t>(cut)});
    resolve({group.begin() + static_cast<std::ptrdiff_t>(cut), group.end()});
  }
};

}  // namespace detail

/// Real roots of p with multiplicities, sorted ascending.
///
/// Companion-matrix eigenvalues seed a hierarchical clustering; each cluster of size m is
/// polished by Newton on the (m-1)-th derivative and accepted only if p and its first m-1
/// derivatives vanish there to rounding level. Rejected clusters are split at their widest
/// gap and retried down to single candidates.
///
/// `magnitude` optionally bounds the size of the terms each coefficient was computed from
/// (for coefficients obtained with cancellation); by default |coefficients| is used.
inline std::vector<RealRoot> real_roots(const Polynomial<double>& poly,
                                        const std::optional<Polynomial<double>>& magnitude = std::nullopt) {
  const Polynomial<double> p = poly.trimmed();
  if (p.degree() == 0) {
    if (p[0] == 0.0) throw DegenerateDegreeError("real_roots: zero polynomial");
    return {};
  }
  for (double c : p.coefficients()) {
    if (!std::isfinite(c)) throw EvaluationError("real_roots: non-finite coefficient");
  }
  double scale = 1.0;
  std::vector<std::complex<double>> z = detail::companion_roots(p, scale);
  std::sort(z.begin(), z.end(), [](auto a, auto b) { return a.real() < b.real(); });

  std::vector<double> mag(p.degree() + 1);
  for (std::size_t k = 0; k <= p.degree(); ++k) {
    mag[k] = std::max(std::abs(p[k]), magnitude ? std::abs((*magnitude)[k]) : 0.0);
  }
  const Polynomial<double> mag_poly(std::move(mag));
  std::vector<RealRoot> out;
  detail::RootResolver resolver{p, mag_poly, z, scale, out};
  std::vector<std::size_t> group;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!group.empty()) {
      const auto& prev = z[group.back()];
      const double link = 1e-2 * std::max(std::abs(prev), 0.1 * scale);
      if (std::abs(z[i] - prev) > link) {
        resolver.resolve(group);
        group.clear();
      }
    }
    group.push_back(i);
  }
  resolver.resolve(group);

  std::sort(out.begin(), out.end(), [](const RealRoot& a, const RealRoot& b) { return a.value < b.value; });
  // Merge duplicates produced by separately polished candidates.
  std::vector<RealRoot> merged;
  for (const auto& r : out) {
    if (!merged.empty() && std::abs(r.value - merged.back().value) <= 1e-12 * std::max(1.0, std::abs(r.value))) {
      merged.back().multiplicity += r.multiplicity;
    } else {
      merged.push_back(r);
    }
  }
  return merged;
}

/// Real roots of c4 V^4 + c3 V^3 + c2 V^2 + c1 V + c0 (coefficients highest degree first).
inline std::vector<RealRoot> solve_quartic_real(const std::array<double, 5>& highest_first) {
  if (highest_first[0] == 0.0) throw DegenerateDegreeError("solve_quartic_real: leading coefficient is zero");
  return real_roots(Polynomial<double>::from_highest_first(std::span<const double>(highest_first)));
}

/// Expands multiplicities: {0 (x2), 1} -> {0, 0, 1}.
inline std::vector<double> expand_multiplicities(const std::vector<RealRoot>& roots) {
  std::vector<double> v;
  for (const auto& r : roots) v.insert(v.end(), static_cast<std::size_t>(r.multiplicity), r.value);
  return v;
}

}  // namespace ladderlab

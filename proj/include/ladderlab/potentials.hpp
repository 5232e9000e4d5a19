#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <boost/math/interpolators/barycentric_rational.hpp>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ladderlab/errors.hpp"
#include "ladderlab/ladder_algebra.hpp"
#include "ladderlab/polynomial.hpp"
#include "ladderlab/roots.hpp"

namespace ladderlab {

/// Zero-mode energies eps_1..eps_n of an order-n ladder system, with its frequency.
class RootSet {
 public:
  RootSet(int order, std::vector<double> roots, double omega) : order_(order), roots_(std::move(roots)), omega_(omega) {
    if (order_ != 3 && order_ != 4) throw std::invalid_argument("RootSet: order must be 3 or 4");
    if (roots_.size() != static_cast<std::size_t>(order_)) {
      throw std::invalid_argument("RootSet: expected " + std::to_string(order_) + " roots");
    }
    if (!(omega_ > 0.0) || !std::isfinite(omega_)) throw std::invalid_argument("RootSet: omega must be positive");
    double sum = 0.0, scale = 0.0;
    for (double r : roots_) {
      if (!std::isfinite(r)) throw std::invalid_argument("RootSet: non-finite root");
      sum += r;
      scale += std::abs(r);
    }
    if (std::abs(sum) > 1e-12 * std::max(1.0, scale)) {
      throw std::invalid_argument("RootSet: roots must sum to zero");
    }
    std::sort(roots_.begin(), roots_.end());
  }

  /// (eps, eps, -2 eps): the double-root order-3 set.
  static RootSet double_root(double eps2, double omega) { return RootSet(3, {eps2, eps2, -2.0 * eps2}, omega); }
  /// (eps, eps, eps, -3 eps): the triple-root order-4 set.
  static RootSet triple_root(double eps2, double omega) {
    return RootSet(4, {eps2, eps2, eps2, -3.0 * eps2}, omega);
  }

  int order() const noexcept { return order_; }
  double omega() const noexcept { return omega_; }
  const std::vector<double>& roots() const noexcept { return roots_; }
  SymmetricSums sums() const { return SymmetricSums::of(roots_); }

 private:
  int order_;
  std::vector<double> roots_;
  double omega_;
};

/// The invariants (d, c[, e]) the reduced algebraic systems are written in.
struct SymmetricInvariants {
  int order = 3;
  double d = 0.0;
  double c = 0.0;
  std::optional<double> e;

  static SymmetricInvariants of(const RootSet& rs) {
    const SymmetricSums s = rs.sums();
    SymmetricInvariants inv;
    inv.order = rs.order();
    if (rs.order() == 3) {
      inv.d = -4.0 * s.e2;
      inv.c = -32.0 * rs.omega() * rs.omega() * s.e3;
    } else {
      inv.d = -s.e2;
      inv.c = -s.e3;
      inv.e = -s.e4;
    }
    return inv;
  }
};

/// Eliminant polynomial G(V, x) whose real roots in V are the branch values at x.
inline BivariatePolynomial eliminant(const RootSet& rs) {
  const SymmetricInvariants inv = SymmetricInvariants::of(rs);
  if (rs.order() == 3) return order3::eliminant(rs.omega(), inv.d, inv.c);
  return order4::eliminant(rs.omega(), inv.d, inv.c, *inv.e);
}

/// Order-3 eliminant coefficients at x, highest degree first.
inline std::array<double, 5> quartic_coefficients(double omega, const SymmetricInvariants& inv, double x) {
  return order3::eliminant_coefficients(omega, inv.d, inv.c, x);
}

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_closed = false;
  bool hi_closed = false;

  bool contains(double x) const {
    const bool above = lo_closed ? x >= lo : x > lo;
    const bool below = hi_closed ? x <= hi : x < hi;
    return above && below;
  }
  static Interval whole_line() { return {}; }
  static Interval closed(double lo, double hi) { return {lo, hi, true, true}; }
  static Interval open(double lo, double hi) { return {lo, hi, false, false}; }
};

enum class Provenance { closed_form, continuation, tabulated };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::closed_form: return "closed-form";
    case Provenance::continuation: return "continuation";
    case Provenance::tabulated: return "tabulated";
  }
  return "?";
}

/// How sqrt(x^2 g(x)) is read in the deformed closed forms: |x| sqrt(g) as printed, or
/// x sqrt(g), the analytic continuation through x = 0.
enum class RadicalBranch { absolute, analytic };

enum class V3Variant { harmonic, deformed };
enum class V4Variant { rational, deformed };

struct FamilyParameters {
  std::string family;
  int order = 0;
  double omega = 0.0;
  std::optional<RootSet> roots;
  std::optional<double> eps2;
  int sign = 0;
  std::optional<double> b;
  RadicalBranch radical = RadicalBranch::absolute;
};

/// One node of a continuation-tracked branch.
struct BranchNode {
  double x;
  double v;
  double dv;
  /// Distance to the nearest other real root at this x (infinite when alone).
  double gap;
};

/// An evaluable potential V(x), V'(x) on explicit domain intervals.
class PotentialBranch {
 public:
  using Evaluator = std::function<std::pair<double, double>(double)>;

  PotentialBranch(Evaluator eval, std::vector<Interval> domain, Provenance provenance, std::string label,
                  FamilyParameters params, std::vector<BranchNode> nodes = {})
      : eval_(std::move(eval)),
        domain_(std::move(domain)),
        provenance_(provenance),
        label_(std::move(label)),
        params_(std::move(params)),
        nodes_(std::move(nodes)) {}

  bool in_domain(double x) const {
    return std::any_of(domain_.begin(), domain_.end(), [x](const Interval& i) { return i.contains(x); });
  }

  /// (V(x), V'(x)); throws DomainError outside the domain.
  std::pair<double, double> V_dV(double x) const {
    if (!std::isfinite(x) || !in_domain(x)) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "x = %.17g is outside the domain of '%s'", x, label_.c_str());
      throw DomainError(buf);
    }
    return eval_(x);
  }
  double V(double x) const { return V_dV(x).first; }
  double dV(double x) const { return V_dV(x).second; }

  const std::vector<Interval>& domain() const noexcept { return domain_; }
  Provenance provenance() const noexcept { return provenance_; }
  const std::string& label() const noexcept { return label_; }
  const FamilyParameters& params() const noexcept { return params_; }
  const std::vector<BranchNode>& nodes() const noexcept { return nodes_; }

 private:
  Evaluator eval_;
  std::vector<Interval> domain_;
  Provenance provenance_;
  std::string label_;
  FamilyParameters params_;
  std::vector<BranchNode> nodes_;
};

namespace detail {

inline void require_omega(double omega) {
  if (!(omega > 0.0) || !std::isfinite(omega)) throw std::invalid_argument("omega must be positive and finite");
}
inline void require_sign(int sign) {
  if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
}

/// Domain of x sqrt(k + w^2 x^2)-type radicals: whole line for k >= 0, |x| > sqrt(-k)/w
/// otherwise. With the absolute reading x = 0 is removed when k > 0 (kink).
inline std::vector<Interval> radical_domain(double k, double omega, RadicalBranch radical) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (k < 0.0) {
    const double edge = std::sqrt(-k) / omega;
    return {Interval::open(-inf, -edge), Interval::open(edge, inf)};
  }
  if (k > 0.0 && radical == RadicalBranch::absolute) return {Interval::open(-inf, 0.0), Interval::open(0.0, inf)};
  return {Interval::whole_line()};
}

/// R = sqrt(k w^2 x^2 + w^4 x^4) in the chosen reading, with dR/dx.
inline std::pair<double, double> radical(double k, double omega, double x, RadicalBranch radical) {
  const double s2 = k + omega * omega * x * x;
  if (s2 < 0.0) throw DomainError("negative radicand");
  const double s = std::sqrt(s2);
  if (radical == RadicalBranch::analytic) {
    const double r = omega * x * s;
    if (s == 0.0) return {r, omega * std::abs(omega * x)};
    return {r, omega * (k + 2.0 * omega * omega * x * x) / s};
  }
  const double r = omega * std::abs(x) * s;
  if (x == 0.0) return {r, 0.0};
  return {r, std::copysign(1.0, x) * omega * (k + 2.0 * omega * omega * x * x) / s};
}

}  // namespace detail

/// V = w^2 x^2 / 2: the first-order (harmonic) family.
inline PotentialBranch harmonic_potential(double omega) {
  detail::require_omega(omega);
  FamilyParameters fp{"harmonic", 1, omega};
  return PotentialBranch([omega](double x) { return std::pair{0.5 * omega * omega * x * x, omega * omega * x}; },
                         {Interval::whole_line()}, Provenance::closed_form, "harmonic", fp);
}

/// V = w^2 x^2 / 2 + b / x^2: the second-order family (no ladder pair is built for it).
inline PotentialBranch second_order_potential(double omega, double b) {
  detail::require_omega(omega);
  constexpr double inf = std::numeric_limits<double>::infinity();
  FamilyParameters fp{"second-order", 2, omega};
  fp.b = b;
  std::vector<Interval> dom = b == 0.0 ? std::vector<Interval>{Interval::whole_line()}
                                       : std::vector<Interval>{Interval::open(-inf, 0.0), Interval::open(0.0, inf)};
  return PotentialBranch(
      [omega, b](double x) {
        const double v = 0.5 * omega * omega * x * x + (b == 0.0 ? 0.0 : b / (x * x));
        const double dv = omega * omega * x - (b == 0.0 ? 0.0 : 2.0 * b / (x * x * x));
        return std::pair{v, dv};
      },
      std::move(dom), Provenance::closed_form, "second-order", fp);
}

/// Order-3 double-root families: harmonic V = -2 eps + w^2 x^2 / 2 and deformed
/// V = 2 eps + 5 w^2 x^2 / 18 + sign (2/9) sqrt(18 eps w^2 x^2 + w^4 x^4).
inline PotentialBranch closed_form_v3(double omega, double eps2, V3Variant variant, int sign = 1,
                                      RadicalBranch radical = RadicalBranch::absolute) {
  detail::require_omega(omega);
  FamilyParameters fp{variant == V3Variant::harmonic ? "v3-harmonic" : "v3-deformed", 3, omega,
                      RootSet::double_root(eps2, omega)};
  fp.eps2 = eps2;
  if (variant == V3Variant::harmonic) {
    return PotentialBranch(
        [omega, eps2](double x) { return std::pair{-2.0 * eps2 + 0.5 * omega * omega * x * x, omega * omega * x}; },
        {Interval::whole_line()}, Provenance::closed_form, "v3-harmonic", fp);
  }
  detail::require_sign(sign);
  fp.sign = sign;
  fp.radical = radical;
  const double k = 18.0 * eps2;
  auto eval = [omega, eps2, sign, radical, k](double x) {
    const auto [r, dr] = detail::radical(k, omega, x, radical);
    const double w2 = omega * omega;
    return std::pair{2.0 * eps2 + 5.0 * w2 * x * x / 18.0 + sign * (2.0 / 9.0) * r,
                     5.0 * w2 * x / 9.0 + sign * (2.0 / 9.0) * dr};
  };
  return PotentialBranch(eval, detail::radical_domain(k, omega, radical), Provenance::closed_form,
                         sign > 0 ? "v3-deformed+" : "v3-deformed-", fp);
}

/// Order-4 triple-root families: rational V = -eps + w^2 x^2 / 8 + 8 eps^2 / (w^2 x^2) and
/// deformed V = (96 eps + 5 w^2 x^2 - sign 3 sqrt(64 eps w^2 x^2 + w^4 x^4)) / 64.
/// sign = +1 selects the lower deformed branch.
inline PotentialBranch closed_form_v4(double omega, double eps2, V4Variant variant, int sign = 1,
                                      RadicalBranch radical = RadicalBranch::absolute) {
  detail::require_omega(omega);
  constexpr double inf = std::numeric_limits<double>::infinity();
  FamilyParameters fp{variant == V4Variant::rational ? "v4-rational" : "v4-deformed", 4, omega,
                      RootSet::triple_root(eps2, omega)};
  fp.eps2 = eps2;
  if (variant == V4Variant::rational) {
    std::vector<Interval> dom = eps2 == 0.0 ? std::vector<Interval>{Interval::whole_line()}
                                            : std::vector<Interval>{Interval::open(-inf, 0.0), Interval::open(0.0, inf)};
    const double w2 = omega * omega;
    return PotentialBranch(
        [w2, eps2](double x) {
          const double sing = eps2 == 0.0 ? 0.0 : 8.0 * eps2 * eps2 / (w2 * x * x);
          const double dsing = eps2 == 0.0 ? 0.0 : -2.0 * sing / x;
          return std::pair{-eps2 + w2 * x * x / 8.0 + sing, w2 * x / 4.0 + dsing};
        },
        std::move(dom), Provenance::closed_form, "v4-rational", fp);
  }
  detail::require_sign(sign);
  fp.sign = sign;
  fp.radical = radical;
  const double k = 64.0 * eps2;
  auto eval = [omega, eps2, sign, radical, k](double x) {
    const auto [r, dr] = detail::radical(k, omega, x, radical);
    const double w2 = omega * omega;
    return std::pair{(96.0 * eps2 + 5.0 * w2 * x * x - sign * 3.0 * r) / 64.0,
                     (10.0 * w2 * x - sign * 3.0 * dr) / 64.0};
  };
  return PotentialBranch(eval, detail::radical_domain(k, omega, radical), Provenance::closed_form,
                         sign > 0 ? "v4-deformed-lower" : "v4-deformed-upper", fp);
}

/// V = w^2/18 (2b + 5x^2 + sign 4x sqrt(b + x^2)), the known order-3 classical system.
inline PotentialBranch gravel_potential(double omega, double b, int sign = 1) {
  detail::require_omega(omega);
  detail::require_sign(sign);
  constexpr double inf = std::numeric_limits<double>::infinity();
  FamilyParameters fp{"gravel", 3, omega, RootSet::double_root(b * omega * omega / 18.0, omega)};
  fp.b = b;
  fp.sign = sign;
  fp.radical = RadicalBranch::analytic;
  std::vector<Interval> dom{Interval::whole_line()};
  if (b < 0.0) dom = {Interval::open(-inf, -std::sqrt(-b)), Interval::open(std::sqrt(-b), inf)};
  return PotentialBranch(
      [omega, b, sign](double x) {
        const double s2 = b + x * x;
        if (s2 < 0.0) throw DomainError("gravel potential: b + x^2 < 0");
        const double s = std::sqrt(s2);
        const double w = omega * omega / 18.0;
        const double ds = s == 0.0 ? std::abs(x) : s + x * x / s;
        return std::pair{w * (2.0 * b + 5.0 * x * x + sign * 4.0 * x * s), w * (10.0 * x + sign * 4.0 * ds)};
      },
      std::move(dom), Provenance::closed_form, sign > 0 ? "gravel+" : "gravel-", fp);
}

/// A potential given by samples, interpolated by a barycentric rational interpolant.
inline PotentialBranch tabulated_potential(std::vector<double> xs, std::vector<double> vs, std::string label = "tabulated") {
  if (xs.size() != vs.size() || xs.size() < 4) {
    throw std::invalid_argument("tabulated potential: need at least 4 (x, V) samples of equal length");
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(vs[i])) throw std::invalid_argument("tabulated potential: non-finite sample");
    if (i > 0 && !(xs[i] > xs[i - 1])) throw std::invalid_argument("tabulated potential: x must be strictly ascending");
  }
  const Interval dom = Interval::closed(xs.front(), xs.back());
  auto interp = std::make_shared<boost::math::barycentric_rational<double>>(xs.begin(), xs.end(), vs.begin(), 3);
  FamilyParameters fp{label, 0, 0.0};
  return PotentialBranch([interp](double x) { return std::pair{(*interp)(x), interp->prime(x)}; }, {dom},
                         Provenance::tabulated, std::move(label), fp);
}

namespace detail {

/// Finite pieces of the domain used for sampling. Infinite ends are cut at +-half_width,
/// or 2 half_width past the finite end when the interval lies outside that window; open
/// ends are pulled in by `margin` of the piece length.
inline std::vector<std::pair<double, double>> sampling_pieces(const PotentialBranch& branch, double half_width,
                                                              double margin) {
  std::vector<std::pair<double, double>> pieces;
  for (const Interval& iv : branch.domain()) {
    double lo = std::isfinite(iv.lo) ? iv.lo : std::min(-half_width, iv.hi - 2.0 * half_width);
    double hi = std::isfinite(iv.hi) ? iv.hi : std::max(half_width, iv.lo + 2.0 * half_width);
    if (std::isfinite(iv.lo) && std::isfinite(iv.hi)) {
      lo = std::max(lo, std::min(-half_width, hi - 2.0 * half_width));
      hi = std::min(hi, std::max(half_width, lo + 2.0 * half_width));
    }
    if (!(hi > lo)) continue;
    const double len = hi - lo;
    if (!iv.lo_closed || lo != iv.lo) lo += margin * len;
    if (!iv.hi_closed || hi != iv.hi) hi -= margin * len;
    pieces.emplace_back(lo, hi);
  }
  return pieces;
}

/// Maps u in [0, total length) onto the pieces.
inline double piece_point(const std::vector<std::pair<double, double>>& pieces, double u) {
  for (const auto& [lo, hi] : pieces) {
    if (u <= hi - lo) return lo + u;
    u -= hi - lo;
  }
  return pieces.back().second;
}

inline double pieces_length(const std::vector<std::pair<double, double>>& pieces) {
  double total = 0.0;
  for (const auto& [lo, hi] : pieces) total += hi - lo;
  return total;
}

}  // namespace detail

/// n points at cell midpoints of the sampling pieces (see detail::sampling_pieces), so
/// interval ends and x = 0 on symmetric domains are avoided.
inline std::vector<double> domain_samples(const PotentialBranch& branch, std::size_t n, double half_width = 4.0,
                                          double margin = 1e-3) {
  const auto pieces = detail::sampling_pieces(branch, half_width, margin);
  if (pieces.empty() || n == 0) return {};
  const double total = detail::pieces_length(pieces);
  std::vector<double> xs;
  xs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs.push_back(detail::piece_point(pieces, (static_cast<double>(i) + 0.5) / static_cast<double>(n) * total));
  }
  return xs;
}

/// Branch export: header `x,V,dV`, 17 significant digits. Points outside the domain are skipped.
inline void write_branch_csv(std::ostream& os, const PotentialBranch& branch, std::span<const double> xs) {
  os << "x,V,dV\n";
  char buf[96];
  for (double x : xs) {
    if (!branch.in_domain(x)) continue;
    const auto [v, dv] = branch.V_dV(x);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", x, v, dv);
    os << buf;
  }
}

/// Node grid of a continuation branch, or an n-point uniform grid over [lo, hi] otherwise.
inline std::vector<double> export_grid(const PotentialBranch& branch, double lo, double hi, std::size_t n) {
  std::vector<double> xs;
  if (!branch.nodes().empty()) {
    for (const auto& nd : branch.nodes()) xs.push_back(nd.x);
    return xs;
  }
  for (std::size_t i = 0; i < n; ++i) xs.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return xs;
}

// ---------------------------------------------------------------------------------------------
// Branch continuation

struct ContinuationOptions {
  /// Roots closer than this (relative to max(1, |V|)) are treated as colliding.
  double collision_threshold = 1e-7;
  /// Smallest refined step, as a fraction of the grid span.
  double min_step_fraction = 1e-9;
  /// New branches start only from roots at least this far (relative) from their neighbours;
  /// they are then extended backward toward the point where they appeared.
  double birth_separation = 1e-3;
  /// Normalized algebraic residual accepted at a node.
  double residual_tolerance = 1e-9;
  /// Branches with fewer nodes are discarded as collision debris.
  std::size_t min_nodes = 3;
};

struct ContinuationResult {
  std::vector<PotentialBranch> branches;
  /// x values where branches ended inside the grid (collisions, folds, blow-up).
  std::vector<double> split_points;
  /// Branches with V'' = w^2 identically (order 4 only), reported and not emitted.
  std::vector<PotentialBranch> excluded_harmonic;
  double max_node_residual = 0.0;
};

namespace detail {

struct Cluster {
  double v;
  int mult;
  double dv;
  double gap;
};

/// -G_x / G_V on the (m-1)-th V-derivative of G, valid on a root of multiplicity m.
inline double implicit_slope(const BivariatePolynomial& g, double x, double v, int mult) {
  const auto m = static_cast<std::size_t>(mult);
  const double hv = g.in_v(x).derivative(m)(v);
  const double hx = g.dx_in_v(x).derivative(m - 1)(v);
  return -hx / hv;
}

/// Relative condition number of a root v of G^(m-1)(., x).
inline double root_condition(const BivariatePolynomial& g, double x, double v, int mult) {
  const auto m = static_cast<std::size_t>(mult - 1);
  const double scale = g.magnitude_in_v(x).derivative(m)(std::abs(v));
  const double slope = std::abs(g.in_v(x).derivative(m + 1)(v)) * std::max(std::abs(v), 1e-300);
  return scale / slope;
}

class BranchTracker {
 public:
  BranchTracker(const RootSet& rs, const ContinuationOptions& opt, double span)
      : rs_(rs), opt_(opt), g_(eliminant(rs)), min_step_(opt.min_step_fraction * span) {
    const double wx = rs.omega() * span;
    double es = 0.0;
    for (double r : rs.roots()) es += std::abs(r);
    blowup_ = 1e8 * (1.0 + wx * wx + es);
  }

  struct Track {
    int mult;
    std::vector<BranchNode> nodes;
    bool alive = true;
  };

  std::vector<Cluster> clusters(double x) const {
    std::vector<RealRoot> rr;
    try {
      rr = real_roots(g_.in_v(x), g_.magnitude_in_v(x));
    } catch (const Error& e) {
      throw ContinuationError(std::string("root extraction failed: ") + e.what(), x);
    }
    std::vector<Cluster> out;
    for (std::size_t i = 0; i < rr.size(); ++i) {
      double gap = std::numeric_limits<double>::infinity();
      if (i > 0) gap = std::min(gap, rr[i].value - rr[i - 1].value);
      if (i + 1 < rr.size()) gap = std::min(gap, rr[i + 1].value - rr[i].value);
      out.push_back({rr[i].value, rr[i].multiplicity, implicit_slope(g_, x, rr[i].value, rr[i].multiplicity), gap});
    }
    return out;
  }

  /// Normalized residual of the defining symmetric system at (x, V, V').
  double node_residual(double x, double v, double dv) const {
    const double w = rs_.omega();
    if (std::abs(w * x) < kNearOriginThreshold) return 0.0;
    const SymmetricSums s = rs_.sums();
    if (rs_.order() == 3) {
      const SymmetricInvariants inv = SymmetricInvariants::of(rs_);
      const double f0 = order3::f0(w, x, v, dv, inv.d);
      const double f1 = order3::f1(w, x, v);
      const double f2 = order3::f2(w, x);
      return std::max({order3::product_p4(s, v, f0, f1, f2).normalized(), order3::product_p2(s, v, f0, f1, f2).normalized(),
                       order3::product_p0(s, v, f0).normalized()});
    }
    const auto ch = order4::resolve_f0(w, x, v, dv, rs_.roots());
    const double f2 = order4::f2(w, x, v), f3 = order4::f3(w, x);
    return std::max({order4::product_p6(s, v, f2, f3).normalized(), order4::product_p4(s, v, ch.f0, ch.f1, f2, f3).normalized(),
                     order4::product_p2(s, v, ch.f0, ch.f1, f2).normalized(), order4::product_p0(s, v, ch.f0).normalized()});
  }

  enum class Status { clean, coincident, unresolved };

  struct Match {
    Status status = Status::unresolved;
    std::size_t cluster = 0;
    double residual = 0.0;
  };

  /// Classifies how a track continues from its last node to x1.
  Match classify(const Track& t, double x1, const std::vector<Cluster>& cs) const {
    Match m;
    const BranchNode& last = t.nodes.back();
    const double dx = x1 - last.x;
    const double pred = last.v + last.dv * dx;
    std::size_t best = cs.size(), second = cs.size();
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const double di = std::abs(cs[i].v - pred);
      if (best == cs.size() || di < std::abs(cs[best].v - pred)) {
        second = best;
        best = i;
      } else if (second == cs.size() || di < std::abs(cs[second].v - pred)) {
        second = i;
      }
    }
    if (best == cs.size()) return m;
    const Cluster& c = cs[best];
    const double err = std::abs(c.v - pred);
    if (c.mult > t.mult) {
      // Absorbed into a root of higher multiplicity right where this track is heading.
      if (err <= 0.25 * std::abs(last.dv * dx) + 1e-6 * (1.0 + std::abs(c.v))) m.status = Status::coincident;
      return m;
    }
    if (c.mult != t.mult) return m;
    const double sep = second == cs.size() ? std::numeric_limits<double>::infinity() : std::abs(cs[second].v - pred);
    if (!(err <= 0.5 * sep)) return m;
    if (c.gap < opt_.collision_threshold * std::max(1.0, std::abs(c.v))) {
      m.status = Status::coincident;
      return m;
    }
    // Trapezoid consistency between the secant and the two endpoint slopes.
    const double change = c.v - last.v;
    const double trap = change - 0.5 * (last.dv + c.dv) * dx;
    if (!std::isfinite(c.dv) || std::abs(trap) > 0.05 * std::abs(change) + 1e-10 * (1.0 + std::abs(c.v))) return m;
    if (std::abs(c.v) > blowup_) return m;
    double res = 0.0;
    try {
      res = node_residual(x1, c.v, c.dv);
    } catch (const Error&) {
      return m;
    }
    if (res > opt_.residual_tolerance) return m;
    m.status = Status::clean;
    m.cluster = best;
    m.residual = res;
    return m;
  }

  /// Walks the tracks from x_start through the target points (ascending or descending).
  /// With `births`, real roots not claimed by any track start new tracks, extended
  /// backward to where they become real.
  void walk(std::vector<Track>& tracks, double x_start, const std::vector<double>& targets, bool births,
            double& max_residual) const {
    if (targets.empty()) return;
    const double dir = targets.back() >= x_start ? 1.0 : -1.0;
    const double end = targets.back();
    const double snap = 1e-12 * std::max(std::abs(end - x_start), 1.0);
    double x = x_start;
    std::size_t k = 0;
    double step = std::numeric_limits<double>::infinity();
    static constexpr std::array<double, 3> kJumpFactors{2.0, 1.5, 1.25};

    while (k < targets.size()) {
      if (!births && std::none_of(tracks.begin(), tracks.end(), [](const Track& t) { return t.alive; })) return;
      const double remaining = std::abs(targets[k] - x);
      double h = std::min(step, remaining);
      double base_h = h;
      std::size_t jump = 0;
      std::vector<std::size_t> coincident;
      std::vector<Cluster> cs;
      std::vector<Match> ms;
      double x1 = x;
      while (true) {
        x1 = x + dir * h;
        // Land exactly on a target when within rounding of it.
        for (std::size_t j = k; j < targets.size() && (targets[j] - x1) * dir <= snap; ++j) {
          if (std::abs(targets[j] - x1) <= snap) x1 = targets[j];
        }
        cs = clusters(x1);
        ms.assign(tracks.size(), Match{});
        std::vector<int> claimed(cs.size(), -1);
        for (std::size_t i = 0; i < tracks.size(); ++i) {
          if (!tracks[i].alive) continue;
          ms[i] = classify(tracks[i], x1, cs);
          if (ms[i].status != Status::clean) continue;
          if (claimed[ms[i].cluster] >= 0) {
            ms[i].status = Status::unresolved;
            ms[static_cast<std::size_t>(claimed[ms[i].cluster])].status = Status::unresolved;
          } else {
            claimed[ms[i].cluster] = static_cast<int>(i);
          }
        }
        bool any_unresolved = false;
        std::vector<std::size_t> coinc_now;
        for (std::size_t i = 0; i < tracks.size(); ++i) {
          if (!tracks[i].alive) continue;
          if (ms[i].status == Status::unresolved) any_unresolved = true;
          if (ms[i].status == Status::coincident) coinc_now.push_back(i);
        }
        if (jump > 0) {
          // A jump over a crossing succeeded only if everything is clean beyond it.
          if (!any_unresolved && coinc_now.empty()) break;
          if (jump < kJumpFactors.size() && std::abs(end - x) > kJumpFactors[jump] * base_h) {
            h = kJumpFactors[jump++] * base_h;
            continue;
          }
          // The roots met and did not re-emerge: those tracks end here.
          for (std::size_t i : coincident) tracks[i].alive = false;
          jump = 0;
          h = base_h;
          continue;
        }
        if (!coinc_now.empty()) {
          if (std::abs(end - x) > kJumpFactors[0] * h) {
            coincident = coinc_now;
            base_h = h;
            h = kJumpFactors[0] * base_h;
            jump = 1;
            continue;
          }
          for (std::size_t i : coinc_now) tracks[i].alive = false;
          continue;
        }
        if (any_unresolved && h > min_step_) {
          h *= 0.5;
          base_h = h;
          continue;
        }
        break;
      }

      // Accept x1: clean tracks advance, unresolved ones end at their last node.
      std::vector<bool> used(cs.size(), false);
      for (std::size_t i = 0; i < tracks.size(); ++i) {
        Track& t = tracks[i];
        if (!t.alive) continue;
        if (ms[i].status == Status::clean) {
          const Cluster& c = cs[ms[i].cluster];
          t.nodes.push_back({x1, c.v, c.dv, c.gap});
          used[ms[i].cluster] = true;
          max_residual = std::max(max_residual, ms[i].residual);
        } else {
          t.alive = false;
        }
      }
      // New tracks start only on grid points, which bounds the work near ill-conditioned
      // contacts; the backward extension recovers where they really begin.
      const bool on_target = std::find(targets.begin() + static_cast<std::ptrdiff_t>(k), targets.end(), x1) != targets.end();
      if (births && on_target) {
        std::vector<Track> born;
        for (std::size_t j = 0; j < cs.size(); ++j) {
          if (used[j]) continue;
          const auto res = admissible(x1, cs[j]);
          if (!res) continue;
          std::vector<Track> single{Track{cs[j].mult, {{x1, cs[j].v, cs[j].dv, cs[j].gap}}}};
          walk(single, x1, {x}, false, max_residual);
          Track nt = std::move(single.front());
          std::reverse(nt.nodes.begin(), nt.nodes.end());
          nt.alive = true;
          max_residual = std::max(max_residual, *res);
          born.push_back(std::move(nt));
        }
        for (auto& b : born) tracks.push_back(std::move(b));
      }
      step = jump > 0 ? base_h : 2.0 * h;
      x = x1;
      while (k < targets.size() && (targets[k] - x) * dir <= snap) ++k;
    }
  }

  /// Residual of a root that may start a new track, or nullopt when it cannot.
  std::optional<double> admissible(double x, const Cluster& c) const {
    if (!std::isfinite(c.dv) || std::abs(c.v) > blowup_) return std::nullopt;
    if (c.gap < opt_.birth_separation * std::max(1.0, std::abs(c.v))) return std::nullopt;
    try {
      const double res = node_residual(x, c.v, c.dv);
      if (res > opt_.residual_tolerance) return std::nullopt;
      return res;
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  const BivariatePolynomial& g() const noexcept { return g_; }
  double blowup() const noexcept { return blowup_; }

 private:
  RootSet rs_;
  ContinuationOptions opt_;
  BivariatePolynomial g_;
  double min_step_;
  double blowup_;
};

/// Evaluates a tracked branch between nodes: Hermite predictor, then Newton on G^(m-1).
/// Refines an eliminant root on the symmetric relations themselves, unknowns (V, f0) for
/// order 3 and (V, f0, f1) for order 4 with the leading coefficients substituted, and
/// returns (V, V') with V' from implicit differentiation of the same relations.
///
/// Both formulations are ill-conditioned in places (condition numbers up to ~1e7 were
/// seen), so the Newton solve and the slope run in extended precision; V then stays
/// smooth enough in x for finite-difference third derivatives. For order 3 the system stays
/// regular where mirror branches cross at x = 0 (the sign of f0 tells them apart), so dv
/// only seeds f0 there. Returns nullopt when the system is singular or Newton does not
/// settle close to v.
struct PolishedValue {
  double v;
  double dv;
  double cond;  // 1 / rcond of the row-scaled Jacobian at the solution
};

inline std::optional<PolishedValue> system_polish(const RootSet& rs, double x, double v, double dv) {
  using Real = long double;
  using Vec = Eigen::Matrix<Real, 3, 1>;
  using Mat = Eigen::Matrix<Real, 3, 3>;
  const double w = rs.omega();
  if (rs.order() == 4 && std::abs(w * x) < kNearOriginThreshold) return std::nullopt;
  Real e[5] = {1, 0, 0, 0, 0};
  for (double r : rs.roots()) {
    for (int k = 4; k >= 1; --k) e[k] += e[k - 1] * static_cast<Real>(r);
  }
  const Real e1 = e[1], e2 = e[2], e3 = e[3], e4 = e[4];
  const Real W = w, X = x, wx = W * X, a = wx * wx;
  const int n = rs.order() == 3 ? 2 : 3;
  Vec u = Vec::Zero();
  u[0] = v;
  if (rs.order() == 3) {
    u[1] = order3::f0(w, x, v, dv, -4.0 * static_cast<double>(e2));
  } else {
    try {
      const auto ch = order4::resolve_f0(w, x, v, dv, rs.roots(), std::numeric_limits<double>::infinity());
      u[1] = ch.f0;
      u[2] = ch.f1;
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  // Residuals F, row term scales, Jacobian J in the unknowns and F_x.
  Vec F, scale, Fx;
  Mat J;
  auto eval = [&](const Vec& z) {
    const Real V = z[0], f0 = z[1], f1 = z[2], V2 = V * V;
    J.setIdentity();
    F.setZero();
    scale.setOnes();
    Fx.setZero();
    if (rs.order() == 3) {
      const Real g1 = 3 * V - a / 2, g2 = wx;
      F[0] = -4 * e2 + g1 * g1 + 2 * f0 * g2 + 8 * e1 * V - 12 * V2;
      scale[0] = 4 * fabsl(e2) + g1 * g1 + 2 * fabsl(f0 * g2) + 8 * fabsl(e1 * V) + 12 * V2;
      F[1] = 8 * e3 + f0 * f0 - 8 * e2 * V + 8 * e1 * V2 - 8 * V2 * V;
      scale[1] = 8 * fabsl(e3) + f0 * f0 + 8 * fabsl(e2 * V) + 8 * fabsl(e1) * V2 + 8 * fabsl(V2 * V);
      J(0, 0) = 6 * g1 + 8 * e1 - 24 * V;
      J(0, 1) = 2 * g2;
      J(1, 0) = -8 * e2 + 16 * e1 * V - 24 * V2;
      J(1, 1) = 2 * f0;
      Fx[0] = -2 * g1 * W * wx + 2 * f0 * W;
    } else {
      const Real g2 = 4 * V - a / 2, g3 = -wx;
      F[0] = -4 * e2 + 2 * f0 + g2 * g2 + 2 * f1 * g3 + 12 * e1 * V - 24 * V2;
      scale[0] = 4 * fabsl(e2) + 2 * fabsl(f0) + g2 * g2 + 2 * fabsl(f1 * g3) + 12 * fabsl(e1 * V) + 24 * V2;
      F[1] = 8 * e3 + f1 * f1 + 2 * f0 * g2 - 16 * e2 * V + 24 * e1 * V2 - 32 * V2 * V;
      scale[1] = 8 * fabsl(e3) + f1 * f1 + 2 * fabsl(f0 * g2) + 16 * fabsl(e2 * V) + 24 * fabsl(e1) * V2 + 32 * fabsl(V2 * V);
      F[2] = -16 * e4 + f0 * f0 + 16 * e3 * V - 16 * e2 * V2 + 16 * e1 * V2 * V - 16 * V2 * V2;
      scale[2] = 16 * fabsl(e4) + f0 * f0 + 16 * fabsl(e3 * V) + 16 * fabsl(e2) * V2 + 16 * fabsl(e1 * V2 * V) +
                 16 * V2 * V2;
      J(0, 0) = 8 * g2 + 12 * e1 - 48 * V;
      J(0, 1) = 2;
      J(0, 2) = 2 * g3;
      J(1, 0) = 8 * f0 - 16 * e2 + 48 * e1 * V - 96 * V2;
      J(1, 1) = 2 * g2;
      J(1, 2) = 2 * f1;
      J(2, 0) = 16 * e3 - 32 * e2 * V + 48 * e1 * V2 - 64 * V2 * V;
      J(2, 1) = 2 * f0;
      J(2, 2) = 0;
      Fx[0] = -2 * g2 * W * wx - 2 * f1 * W;
      Fx[1] = -2 * f0 * W * wx;
    }
  };
  Real rcond = 0;
  auto solve = [&](const Vec& rhs, Vec& out) {
    // Row scaling by the term magnitudes keeps the pivoting meaningful.
    Mat Js = J;
    Vec bs = rhs;
    for (int r = 0; r < n; ++r) {
      const Real sc = std::max(scale[r], Real(1e-300));
      Js.row(r) /= sc;
      bs[r] /= sc;
    }
    const Eigen::FullPivLU<Mat> lu(Js);
    rcond = lu.rcond();
    if (lu.rank() < 3 || rcond < 1e-13L) return false;
    out = lu.solve(bs);
    return out.allFinite();
  };
  for (int it = 0; it < 10; ++it) {
    eval(u);
    Vec step;
    if (!solve(F, step)) return std::nullopt;
    u -= step;
    if (fabsl(step[0]) <= 1e-18L * std::max(Real(1), fabsl(u[0]))) break;
  }
  const double vp = static_cast<double>(u[0]);
  if (!(std::abs(vp - v) <= 1e-6 * (1.0 + std::abs(v)))) return std::nullopt;
  eval(u);
  Vec slope;
  if (!solve(-Fx, slope)) return std::nullopt;
  return PolishedValue{vp, static_cast<double>(slope[0]), static_cast<double>(1 / rcond)};
}

struct TrackedEvaluator {
  RootSet rs;
  BivariatePolynomial g;
  int mult;
  std::vector<BranchNode> nodes;

  std::pair<double, double> operator()(double x) const {
    auto it = std::upper_bound(nodes.begin(), nodes.end(), x, [](double a, const BranchNode& n) { return a < n.x; });
    std::size_t i = it == nodes.begin() ? 0 : static_cast<std::size_t>(it - nodes.begin()) - 1;
    if (i + 1 >= nodes.size()) i = nodes.size() >= 2 ? nodes.size() - 2 : 0;
    if (nodes.size() == 1) return {nodes[0].v, nodes[0].dv};
    const BranchNode& a = nodes[i];
    const BranchNode& b = nodes[i + 1];
    const double h = b.x - a.x;
    const double t = (x - a.x) / h;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
    const double pred = h00 * a.v + h10 * h * a.dv + h01 * b.v + h11 * h * b.dv;
    const double dpred = (6 * t * t - 6 * t) / h * a.v + (3 * t * t - 4 * t + 1) * a.dv + (6 * t - 6 * t * t) / h * b.v +
                         (3 * t * t - 2 * t) * b.dv;
    const double gap = std::min(a.gap, b.gap);
    const Polynomial<double> p = g.in_v(x);
    const double v = newton_polish(p.derivative(static_cast<std::size_t>(mult - 1)), pred, 40);
    double chosen = v;
    if (!(std::abs(v - pred) <= 0.25 * gap) || !std::isfinite(v)) {
      const auto rr = real_roots(p, g.magnitude_in_v(x));
      double best = std::numeric_limits<double>::infinity();
      for (const auto& r : rr) {
        if (r.multiplicity == mult && std::abs(r.value - pred) < best) {
          best = std::abs(r.value - pred);
          chosen = r.value;
        }
      }
      if (!(best <= 0.5 * gap)) throw EvaluationError("tracked branch: no root near the interpolated value");
    }
    // Near the origin the eliminant slope is 0/0 where mirror branches cross.
    double dv = std::abs(rs.omega() * x) < kNearOriginThreshold ? dpred : implicit_slope(g, x, chosen, mult);
    if (!std::isfinite(dv)) dv = dpred;
    // The polish runs in extended precision; keep it only where that outweighs its worse conditioning.
    if (const auto refined = system_polish(rs, x, chosen, dv)) {
      if (refined->cond < 1e4 * root_condition(g, x, chosen, mult)) return {refined->v, refined->dv};
    }
    return {chosen, dv};
  }
};

inline bool is_harmonic_track(const std::vector<BranchNode>& nodes, double omega) {
  if (nodes.size() < 3) return false;
  const double w2 = omega * omega;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double vpp = (nodes[i + 1].dv - nodes[i].dv) / (nodes[i + 1].x - nodes[i].x);
    if (std::abs(vpp - w2) > 1e-6 * std::max(1.0, w2)) return false;
  }
  return true;
}

}  // namespace detail

/// Tracks every real root of the eliminant across the grid and returns the maximal
/// continuous branches. Roots crossing transversally are followed through the crossing;
/// branches end where roots collide and leave the reals, or blow up. For order 4, x = 0 is
/// a break point (the eliminant's leading coefficient vanishes there).
inline ContinuationResult branch_continuation(const RootSet& rs, std::span<const double> x_grid,
                                              const ContinuationOptions& opt = {}) {
  if (x_grid.size() < 2) throw std::invalid_argument("branch_continuation: grid needs at least two points");
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    if (!std::isfinite(x_grid[i])) throw std::invalid_argument("branch_continuation: non-finite grid point");
    if (i > 0 && !(x_grid[i] > x_grid[i - 1])) throw std::invalid_argument("branch_continuation: grid must be strictly ascending");
  }
  const double span = x_grid.back() - x_grid.front();
  detail::BranchTracker tracker(rs, opt, span);

  std::vector<std::vector<double>> segments(1);
  ContinuationResult result;
  for (double x : x_grid) {
    if (rs.order() == 4 && x == 0.0) {
      if (!segments.back().empty()) segments.emplace_back();
      result.split_points.push_back(0.0);
      continue;
    }
    if (rs.order() == 4 && !segments.back().empty() && segments.back().back() < 0.0 && x > 0.0) {
      segments.emplace_back();
      result.split_points.push_back(0.0);
    }
    segments.back().push_back(x);
  }

  std::vector<detail::BranchTracker::Track> finished;
  for (const auto& seg : segments) {
    if (seg.size() < 2) continue;
    std::vector<detail::BranchTracker::Track> tracks;
    for (const auto& c : tracker.clusters(seg.front())) {
      const auto res = tracker.admissible(seg.front(), c);
      if (!res) continue;
      result.max_node_residual = std::max(result.max_node_residual, *res);
      tracks.push_back({c.mult, {{seg.front(), c.v, c.dv, c.gap}}});
    }
    tracker.walk(tracks, seg.front(), std::vector<double>(seg.begin() + 1, seg.end()), true, result.max_node_residual);
    for (auto& t : tracks) finished.push_back(std::move(t));
  }

  const double min_extent = 1e-6 * span;
  for (auto& t : finished) {
    if (t.nodes.size() < opt.min_nodes || t.nodes.back().x - t.nodes.front().x < min_extent) continue;
    FamilyParameters fp{"continuation", rs.order(), rs.omega(), rs};
    const double lo = t.nodes.front().x, hi = t.nodes.back().x;
    char label[96];
    std::snprintf(label, sizeof label, "branch[%zu] x in [%.6g, %.6g]%s", result.branches.size(), lo, hi,
                  t.mult > 1 ? (" multiplicity " + std::to_string(t.mult)).c_str() : "");
    detail::TrackedEvaluator ev{rs, tracker.g(), t.mult, t.nodes};
    PotentialBranch br(ev, {Interval::closed(lo, hi)}, Provenance::continuation, label, fp, t.nodes);
    if (rs.order() == 4 && detail::is_harmonic_track(t.nodes, rs.omega())) {
      result.excluded_harmonic.push_back(std::move(br));
    } else {
      result.branches.push_back(std::move(br));
    }
  }
  // Branch ends inside a segment are splits; segment ends are not.
  for (const auto& br : result.branches) {
    for (double end : {br.nodes().front().x, br.nodes().back().x}) {
      const bool at_segment_end = std::any_of(segments.begin(), segments.end(), [end](const std::vector<double>& seg) {
        return !seg.empty() && (end == seg.front() || end == seg.back());
      });
      if (!at_segment_end) result.split_points.push_back(end);
    }
  }
  std::sort(result.split_points.begin(), result.split_points.end());
  result.split_points.erase(std::unique(result.split_points.begin(), result.split_points.end()),
                            result.split_points.end());
  return result;
}

namespace detail {

/// Distance from x to the nearest finite edge of the domain interval holding it.
inline double edge_distance(const PotentialBranch& branch, double x) {
  for (const Interval& iv : branch.domain()) {
    if (iv.contains(x)) return std::min(x - iv.lo, iv.hi - x);
  }
  return 0.0;
}

}  // namespace detail

}  // namespace ladderlab

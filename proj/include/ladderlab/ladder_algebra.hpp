#pragma once

// Closed algebraic relations between a potential value V(x), the ladder coefficients
// f_0..f_{n-1} and the zero-mode energies. Shared by branch construction, operator
// assembly and the residual suites.

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ladderlab/errors.hpp"
#include "ladderlab/polynomial.hpp"

namespace ladderlab {

/// A residual together with the magnitude of the terms that produced it.
struct Residual {
  double raw = 0.0;
  double scale = 0.0;

  /// |raw| / max(1, scale): absolute for small terms, relative for large ones.
  double normalized() const { return std::abs(raw) / std::max(1.0, scale); }

  static Residual of(std::initializer_list<double> terms) {
    Residual r;
    for (double t : terms) {
      r.raw += t;
      r.scale += std::abs(t);
    }
    return r;
  }
};

/// Elementary symmetric values e1..e4 of the zero-mode energies (missing ones are zero).
struct SymmetricSums {
  double e1 = 0.0, e2 = 0.0, e3 = 0.0, e4 = 0.0;

  static SymmetricSums of(std::span<const double> roots) {
    const std::vector<double> e = elementary_symmetric(roots);
    SymmetricSums s;
    if (e.size() > 1) s.e1 = e[1];
    if (e.size() > 2) s.e2 = e[2];
    if (e.size() > 3) s.e3 = e[3];
    if (e.size() > 4) s.e4 = e[4];
    return s;
  }
};

/// Below this |w x| the 1/x coefficient formulas switch to the first-order relations
/// w f0 = f1 V' (order 3) and f1 = w f0 / V' (order 4).
inline constexpr double kNearOriginThreshold = 1e-3;

namespace order3 {

inline double f2(double omega, double x) { return omega * x; }
inline double f1(double omega, double x, double v) { return 3.0 * v - 0.5 * omega * omega * x * x; }

/// f0 from the linear relation between f0 and V; d = -4 e2.
inline double f0(double omega, double x, double v, double dv, double d) {
  const double wx = omega * x;
  if (std::abs(wx) >= kNearOriginThreshold) {
    const double a = wx * wx;
    return (3.0 * v * v + 3.0 * a * v - 0.25 * a * a - d) / (2.0 * wx);
  }
  return f1(omega, x, v) * dv / omega;
}

// Product identity A- A+ = 8 prod(H - eps_i), coefficient by coefficient in p.
inline Residual product_p4(const SymmetricSums& s, double v, double f0, double f1, double f2) {
  (void)f0;
  return Residual::of({2.0 * s.e1, 2.0 * f1, f2 * f2, -6.0 * v});
}
inline Residual product_p2(const SymmetricSums& s, double v, double f0, double f1, double f2) {
  return Residual::of({-4.0 * s.e2, f1 * f1, 2.0 * f0 * f2, 8.0 * s.e1 * v, -12.0 * v * v});
}
inline Residual product_p0(const SymmetricSums& s, double v, double f0) {
  return Residual::of({8.0 * s.e3, f0 * f0, -8.0 * s.e2 * v, 8.0 * s.e1 * v * v, -8.0 * v * v * v});
}

/// The two reduced relations after f1, f2 are substituted (d, c invariants).
inline Residual reduced_first(double omega, double d, double x, double v, double f0) {
  const double a = omega * omega * x * x;
  return Residual::of({0.25 * a * a, d, 2.0 * omega * x * f0, -3.0 * a * v, -3.0 * v * v});
}
inline Residual reduced_second(double omega, double d, double c, double v, double f0) {
  return Residual::of({-c / (4.0 * omega * omega), f0 * f0, 2.0 * d * v, -8.0 * v * v * v});
}

/// Quartic eliminant in V, coefficients highest degree first.
inline std::array<double, 5> eliminant_coefficients(double omega, double d, double c, double x) {
  const double a = omega * omega * x * x;
  return {9.0, -14.0 * a, 7.5 * a * a - 6.0 * d, 2.0 * d * a - 1.5 * a * a * a,
          d * d + 0.5 * d * a * a + a * a * a * a / 16.0 - c * x * x};
}

/// The quartic as printed in the source derivation; kept for audit only.
inline Residual printed_quartic(double omega, double d, double x, double v) {
  const double a = omega * omega * x * x;
  return Residual::of({-9.0 * std::pow(v, 4), 14.0 * a * v * v * v, (6.0 * d - 7.5 * a * a) * v * v,
                       (1.5 * a * a * a - 2.0 * d) * v, -(0.5 * d * a * a + d * d)});
}

/// G(V, x) with the x-dependence kept explicit: V^k x^j table.
inline BivariatePolynomial eliminant(double omega, double d, double c) {
  const double w2 = omega * omega, w4 = w2 * w2, w6 = w4 * w2, w8 = w4 * w4;
  BivariatePolynomial g(4, 8);
  g.at(4, 0) = 9.0;
  g.at(3, 2) = -14.0 * w2;
  g.at(2, 4) = 7.5 * w4;
  g.at(2, 0) = -6.0 * d;
  g.at(1, 2) = 2.0 * d * w2;
  g.at(1, 6) = -1.5 * w6;
  g.at(0, 0) = d * d;
  g.at(0, 4) = 0.5 * d * w4;
  g.at(0, 8) = w8 / 16.0;
  g.at(0, 2) = -c;
  return g;
}

}  // namespace order3

namespace order4 {

inline double f3(double omega, double x) { return -omega * x; }
inline double f2(double omega, double x, double v) { return 4.0 * v - 0.5 * omega * omega * x * x; }

/// f1 from the p^4 relation, linear in f0; d = -e2.
inline double f1(double omega, double x, double v, double dv, double d, double f0) {
  const double wx = omega * x;
  if (std::abs(wx) >= kNearOriginThreshold) {
    const double a = wx * wx;
    return (16.0 * d + a * a + 8.0 * f0 - 16.0 * a * v - 32.0 * v * v) / (8.0 * wx);
  }
  if (dv == 0.0) throw EvaluationError("order-4 f1: removable singularity at x=0 with V'=0");
  return omega * f0 / dv;
}

inline Residual product_p6(const SymmetricSums& s, double v, double f2, double f3) {
  return Residual::of({2.0 * s.e1, 2.0 * f2, f3 * f3, -8.0 * v});
}
inline Residual product_p4(const SymmetricSums& s, double v, double f0, double f1, double f2, double f3) {
  return Residual::of({-4.0 * s.e2, 2.0 * f0, f2 * f2, 2.0 * f1 * f3, 12.0 * s.e1 * v, -24.0 * v * v});
}
inline Residual product_p2(const SymmetricSums& s, double v, double f0, double f1, double f2) {
  return Residual::of(
      {8.0 * s.e3, f1 * f1, 2.0 * f0 * f2, -16.0 * s.e2 * v, 24.0 * s.e1 * v * v, -32.0 * v * v * v});
}
inline Residual product_p0(const SymmetricSums& s, double v, double f0) {
  const double v2 = v * v;
  return Residual::of(
      {-16.0 * s.e4, f0 * f0, 16.0 * s.e3 * v, -16.0 * s.e2 * v2, 16.0 * s.e1 * v2 * v, -16.0 * v2 * v2});
}

/// The p^0 term of the bracket relation: -w f0 + f1 V'.
inline Residual chain_p0(double omega, double dv, double f0, double f1) {
  return Residual::of({-omega * f0, f1 * dv});
}

/// The magnitude-and-sign resolution of f0: |f0| = 4 sqrt(prod(V - eps_i)), the sign
/// chosen so that the p^2 and p^0 relations hold.
struct F0Choice {
  double f0;
  double f1;
  double residual_plus;
  double residual_minus;
};

inline F0Choice resolve_f0(double omega, double x, double v, double dv, std::span<const double> roots,
                           double sign_tolerance = 1e-6) {
  const SymmetricSums s = SymmetricSums::of(roots);
  const double d = -s.e2;
  double prod = 16.0;
  double prod_scale = 16.0;
  for (double r : roots) {
    prod *= (v - r);
    prod_scale *= (std::abs(v) + std::abs(r));
  }
  if (prod < -1e-9 * std::max(1.0, prod_scale)) {
    throw InconsistentInputError("order-4 f0: 16 prod(V - eps_i) is negative, V is not on an order-4 branch");
  }
  const double mag = std::sqrt(std::max(prod, 0.0));
  const double f2v = f2(omega, x, v);
  auto score = [&](double f0) {
    const double f1v = f1(omega, x, v, dv, d, f0);
    return std::pair{f1v, product_p2(s, v, f0, f1v, f2v).normalized() + chain_p0(omega, dv, f0, f1v).normalized()};
  };
  const auto [f1p, rp] = score(mag);
  const auto [f1m, rm] = score(-mag);
  if (std::min(rp, rm) > sign_tolerance) {
    throw SignResolutionError("order-4 f0: neither sign satisfies the ladder relations", rp, rm);
  }
  F0Choice ch = rp <= rm ? F0Choice{mag, f1p, rp, rm} : F0Choice{-mag, f1m, rp, rm};
  // Near a pole of V the closed f1 formula cancels to a small fraction of its terms;
  // w f0 / V' (same value on the branch) is then the better conditioned of the two.
  const double wx = omega * x;
  if (std::abs(wx) >= kNearOriginThreshold && dv != 0.0) {
    const double a = wx * wx;
    const double err_closed =
        (16.0 * std::abs(d) + a * a + 8.0 * mag + 16.0 * a * std::abs(v) + 32.0 * v * v) / (8.0 * std::abs(wx));
    double cond_f0 = 2.0;
    for (double r : roots) cond_f0 += 0.5 * (std::abs(v) + std::abs(r)) / std::max(std::abs(v - r), 1e-300);
    const double f1_slope = omega * ch.f0 / dv;
    if (std::abs(f1_slope) * (cond_f0 + 4.0) < err_closed) ch.f1 = f1_slope;
  }
  return ch;
}

/// Quintic eliminant in V obtained by eliminating f0, f1 from the symmetric system
/// (overall factor 1/64 removed). Table of V^k x^j coefficients.
inline BivariatePolynomial eliminant(double omega, double d, double c, double e) {
  std::array<double, 17> w{};
  w[0] = 1.0;
  for (std::size_t k = 1; k < w.size(); ++k) w[k] = w[k - 1] * omega;
  BivariatePolynomial g(5, 16);
  g.at(5, 6) = -2048.0 * w[6];

  g.at(4, 8) = 1088.0 * w[8];
  g.at(4, 4) = 8192.0 * d * w[4];

  g.at(3, 10) = -224.0 * w[10];
  g.at(3, 6) = -2048.0 * d * w[6];
  g.at(3, 4) = -6144.0 * c * w[4];
  g.at(3, 2) = -8192.0 * w[2] * (d * d + 4.0 * e);

  g.at(2, 12) = 22.0 * w[12];
  g.at(2, 8) = 192.0 * d * w[8];
  g.at(2, 6) = 2048.0 * c * w[6];
  g.at(2, 4) = -512.0 * w[4] * (5.0 * d * d - 44.0 * e);
  g.at(2, 2) = 16384.0 * c * d * w[2];
  g.at(2, 0) = 16384.0 * c * c;

  g.at(1, 14) = -w[14];
  g.at(1, 10) = -16.0 * d * w[10];
  g.at(1, 8) = -32.0 * c * w[8];
  g.at(1, 6) = 256.0 * w[6] * (d * d - 20.0 * e);
  g.at(1, 4) = -1024.0 * c * d * w[4];
  g.at(1, 2) = -4096.0 * w[2] * (4.0 * c * c - d * d * d - 4.0 * d * e);
  g.at(1, 0) = -8192.0 * c * (d * d + 4.0 * e);

  g.at(0, 16) = w[16] / 64.0;
  g.at(0, 12) = d * w[12];
  g.at(0, 10) = -16.0 * c * w[10];
  g.at(0, 8) = 8.0 * w[8] * (3.0 * d * d + 68.0 * e);
  g.at(0, 6) = -512.0 * c * d * w[6];
  g.at(0, 4) = 256.0 * w[4] * (16.0 * c * c + d * d * d - 28.0 * d * e);
  g.at(0, 2) = -4096.0 * c * w[2] * (d * d - 4.0 * e);
  g.at(0, 0) = 1024.0 * (d * d + 4.0 * e) * (d * d + 4.0 * e);
  return g;
}

/// Quintic coefficients at x, highest degree first.
inline std::array<double, 6> eliminant_coefficients(double omega, double d, double c, double e, double x) {
  const Polynomial<double> p = eliminant(omega, d, c, e).in_v(x);
  return {p[5], p[4], p[3], p[2], p[1], p[0]};
}

/// The condensed f0^2 relation as printed (sign pattern inconsistent); audit only.
inline Residual printed_f0_relation(double d, double c, double e, double v, double f0) {
  return Residual::of({-16.0 * e, f0 * f0, 16.0 * c * v, -4.0 * d * v * v, -16.0 * std::pow(v, 4)});
}

/// The printed quintic read as "... = 0"; audit only.
inline Residual printed_quintic(double omega, double d, double c, double e, double x, double v) {
  const double a = omega * omega * x * x;
  const double a2 = a * a;
  const double v2 = v * v, v3 = v2 * v, v4 = v3 * v, v5 = v4 * v;
  return Residual::of({
      -32.0 * a * v5,
      (128.0 * d + 17.0 * a2) * v4,
      (-96.0 * c - 128.0 * d * d / a - 512.0 * e / a - 32.0 * d * a - 3.5 * a2 * a) * v3,
      (-40.0 * d * d + 352.0 * e + 256.0 * c * c / a2 + 256.0 * c * d / a + 32.0 * c * a + 3.0 * d * a2 +
       11.0 * a2 * a2 / 32.0) *
          v2,
      (-16.0 * c * d - 128.0 * c * d * d / a2 - 512.0 * c * e / a2 - 256.0 * c * c / a + 64.0 * d * d * d / a +
       256.0 * d * e / a - a2 * a2 * a / 64.0) *
          v,
      64.0 * c * c + 4.0 * d * d * d - 112.0 * d * e + 16.0 * std::pow(d, 4) / a2 + 128.0 * d * d * e / a2 +
          256.0 * e * e / a2 - 64.0 * c * d * d / a + 256.0 * c * e / a - 8.0 * c * d * a + 1.5 * d * d * a2 +
          8.5 * e * a2 - 0.25 * c * a2 * a + d * a2 * a2 / 64.0 + a2 * a2 * a2 / 4096.0,
  });
}

}  // namespace order4

}  // namespace ladderlab

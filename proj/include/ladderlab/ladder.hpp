#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ladderlab/errors.hpp"
#include "ladderlab/finite_difference.hpp"
#include "ladderlab/ladder_algebra.hpp"
#include "ladderlab/phase_core.hpp"
#include "ladderlab/polynomial.hpp"
#include "ladderlab/potentials.hpp"

namespace ladderlab {

enum class LadderRole { lowering, raising };

inline const char* to_string(LadderRole r) { return r == LadderRole::lowering ? "lowering" : "raising"; }

/// A = sum_k c_k(x) p^k with c_n = 1 (odd n) or +-i (even n).
///
/// The upper-sign member has c_k = f_k for odd k and i f_k for even k; its partner is the
/// complex conjugate. Which of the two lowers is fixed at build time from {H, A}.
class LadderOperator {
 public:
  /// f_0..f_{n-1} at x; throws DomainError outside the branch domain.
  using CoefficientFn = std::function<std::vector<double>(double)>;
  /// Distance from x to the nearest domain edge; bounds the differentiation stencil.
  using EdgeFn = std::function<double(double)>;

  LadderOperator(int order, double omega, bool upper, LadderRole role, CoefficientFn coeffs, std::string name,
                 EdgeFn edge = {})
      : order_(order),
        omega_(omega),
        upper_(upper),
        role_(role),
        coeffs_(std::move(coeffs)),
        name_(std::move(name)),
        edge_(std::move(edge)) {
    if (order_ < 1) throw std::invalid_argument("LadderOperator: order must be positive");
  }

  int order() const noexcept { return order_; }
  double omega() const noexcept { return omega_; }
  LadderRole role() const noexcept { return role_; }
  bool upper_sign() const noexcept { return upper_; }
  const std::string& name() const noexcept { return name_; }

  std::vector<double> coefficients(double x) const {
    std::vector<double> f = coeffs_(x);
    if (f.size() != static_cast<std::size_t>(order_)) throw std::logic_error("LadderOperator: wrong coefficient count");
    return f;
  }

  /// c_0..c_n of this member.
  std::vector<Complex> momentum_coefficients(double x) const { return assemble(coefficients(x)); }

  Complex operator()(double x, double p) const { return horner(momentum_coefficients(x), p); }
  Complex operator()(const PhaseState& s, int axis = 0) const { return (*this)(s.x(axis), s.p(axis)); }

  /// (dA/dx, dA/dp). The p-derivative is exact; the x-derivative differentiates the
  /// coefficient functions with five-point stencils on a halving ladder of steps that stays
  /// inside the domain.
  std::pair<Complex, Complex> gradient(double x, double p) const {
    const std::vector<Complex> c = momentum_coefficients(x);
    Complex dp{0.0, 0.0};
    for (std::size_t k = c.size() - 1; k >= 1; --k) dp = dp * p + static_cast<double>(k) * c[k];
    double h = 1e-3 * std::max(1.0, std::abs(x));
    if (edge_) h = std::min(h, edge_(x) / 2.5);
    h = std::max(h, kDefaultBracketStep * 1e-2 * std::max(1.0, std::abs(x)));
    auto value = [&](double t) {
      const Complex a = horner(momentum_coefficients(t), p);
      return std::vector<double>{a.real(), a.imag()};
    };
    try {
      const std::vector<double> d = adaptive_derivative(value, x, h, 1);
      return {Complex{d[0], d[1]}, dp};
    } catch (const DomainError& e) {
      throw EvaluationError("partial d/dx of '" + name_ + "': " + e.what());
    }
  }

  /// As a phase-space observable acting on one axis of a 1D or 2D state.
  Observable observable(int arity = 1, int axis = 0) const {
    auto self = std::make_shared<const LadderOperator>(*this);
    return Observable(
        arity, [self, axis](const PhaseState& s) { return (*self)(s.x(axis), s.p(axis)); },
        [self, axis](const PhaseState& s) {
          Gradient g(s.size(), Complex{0.0, 0.0});
          const auto [dx, dp] = self->gradient(s.x(axis), s.p(axis));
          g[static_cast<std::size_t>(2 * axis)] = dx;
          g[static_cast<std::size_t>(2 * axis + 1)] = dp;
          return g;
        },
        name_);
  }

  LadderOperator conjugate(std::string name) const {
    return LadderOperator(order_, omega_, !upper_,
                          role_ == LadderRole::lowering ? LadderRole::raising : LadderRole::lowering, coeffs_,
                          std::move(name), edge_);
  }

 private:
  std::vector<Complex> assemble(const std::vector<double>& f) const {
    std::vector<Complex> c(static_cast<std::size_t>(order_) + 1);
    for (int k = 0; k <= order_; ++k) {
      const double fk = k == order_ ? 1.0 : f[static_cast<std::size_t>(k)];
      Complex ck = k % 2 == 0 ? Complex{0.0, fk} : Complex{fk, 0.0};
      c[static_cast<std::size_t>(k)] = upper_ ? ck : std::conj(ck);
    }
    return c;
  }
  static Complex horner(const std::vector<Complex>& c, double p) {
    Complex acc{0.0, 0.0};
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * p + *it;
    return acc;
  }

  int order_;
  double omega_;
  bool upper_;
  LadderRole role_;
  CoefficientFn coeffs_;
  std::string name_;
  EdgeFn edge_;
};

struct LadderPair {
  LadderOperator lowering;
  LadderOperator raising;
};

/// Q(E) = kappa prod(E - eps_i) and P(E) = -i w Q'(E).
struct PhaPolynomials {
  int order;
  double omega;
  double kappa;
  std::vector<double> zero_modes;
  Polynomial<double> Q;
  Polynomial<Complex> P;
};

inline PhaPolynomials pha_polynomials(int order, double omega, std::vector<double> zero_modes) {
  const double kappa = std::pow(2.0, order);
  Polynomial<double> q = Polynomial<double>::from_roots(zero_modes, kappa);
  const Polynomial<double> dq = q.derivative();
  std::vector<Complex> pc;
  for (double v : dq.coefficients()) pc.emplace_back(0.0, -omega * v);
  return {order, omega, kappa, std::move(zero_modes), std::move(q), Polynomial<Complex>(std::move(pc))};
}

inline PhaPolynomials pha_polynomials(const RootSet& rs) { return pha_polynomials(rs.order(), rs.omega(), rs.roots()); }

/// Q(E) = 2E for the harmonic pair.
inline PhaPolynomials pha_polynomials_harmonic(double omega) { return pha_polynomials(1, omega, {0.0}); }

/// H = p^2/2 + V(x) on one axis, with analytic gradient.
inline Observable hamiltonian_1d(const PotentialBranch& branch, int arity = 1, int axis = 0) {
  auto b = std::make_shared<const PotentialBranch>(branch);
  return Observable(
      arity,
      [b, axis](const PhaseState& s) { return Complex(0.5 * s.p(axis) * s.p(axis) + b->V(s.x(axis))); },
      [b, axis](const PhaseState& s) {
        Gradient g(s.size(), Complex{0.0, 0.0});
        g[static_cast<std::size_t>(2 * axis)] = b->dV(s.x(axis));
        g[static_cast<std::size_t>(2 * axis + 1)] = s.p(axis);
        return g;
      },
      "H[" + branch.label() + "]");
}

namespace detail {

/// Pairs the upper-sign operator with its conjugate, labeling by the sign of the fitted
/// bracket phase {H, A} = sigma w A: sigma = +i lowers.
inline LadderPair label_pair(const PotentialBranch& branch, int order, double omega, LadderOperator::CoefficientFn fn,
                             const std::string& tag) {
  auto b = std::make_shared<const PotentialBranch>(branch);
  LadderOperator::EdgeFn edge = [b](double x) { return edge_distance(*b, x); };
  LadderOperator upper(order, omega, true, LadderRole::raising, fn, tag + "+", edge);
  const Observable h = hamiltonian_1d(branch);
  bool upper_lowers = false;
  for (double x : domain_samples(branch, 7)) {
    try {
      const PhaseState s = PhaseState::one_d(x, 0.7);
      const Complex a = upper(s);
      if (std::abs(a) < 1e-3) continue;
      const Complex sigma = poisson_bracket(h, upper.observable(), s) / (omega * a);
      upper_lowers = sigma.imag() > 0.0;
      break;
    } catch (const Error&) {
      continue;
    }
  }
  if (upper_lowers) {
    LadderOperator lower(order, omega, true, LadderRole::lowering, fn, tag + "-", edge);
    return {lower, lower.conjugate(tag + "+")};
  }
  return {upper.conjugate(tag + "-"), upper};
}

inline std::string describe_residual(const char* what, double x, double r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s: residual %.3e at x = %.6g", what, r, x);
  return buf;
}

}  // namespace detail

inline constexpr double kConsistencyTolerance = 1e-6;

/// a = p -+ i w x, Q(E) = 2E.
inline LadderPair build_ladder1(double omega) {
  detail::require_omega(omega);
  return detail::label_pair(harmonic_potential(omega), 1, omega,
                            [omega](double x) { return std::vector<double>{omega * x}; }, "a");
}

/// Order-3 pair on a branch of the (d, c) family. Throws InconsistentInputError when the
/// branch does not satisfy the reduced relations for these invariants; `validate = false`
/// skips the check (negative controls pair branches with the wrong parameters on purpose).
inline LadderPair build_ladder3(const PotentialBranch& branch, double omega, const SymmetricInvariants& inv,
                                bool validate = true) {
  detail::require_omega(omega);
  if (inv.order != 3) throw std::invalid_argument("build_ladder3: invariants are not order 3");
  const double d = inv.d, c = inv.c;
  for (double x : validate ? domain_samples(branch, 16) : std::vector<double>{}) {
    if (std::abs(omega * x) < kNearOriginThreshold) continue;
    const auto [v, dv] = branch.V_dV(x);
    const double f0 = order3::f0(omega, x, v, dv, d);
    const double r = order3::reduced_second(omega, d, c, v, f0).normalized();
    if (!(r <= kConsistencyTolerance)) {
      throw InconsistentInputError(detail::describe_residual("build_ladder3: branch does not match invariants", x, r));
    }
  }
  auto b = std::make_shared<const PotentialBranch>(branch);
  auto fn = [b, omega, d](double x) {
    const auto [v, dv] = b->V_dV(x);
    return std::vector<double>{order3::f0(omega, x, v, dv, d), order3::f1(omega, x, v), order3::f2(omega, x)};
  };
  return detail::label_pair(branch, 3, omega, fn, "A3");
}

/// Order-4 pair: f0 = +-4 sqrt(prod(V - eps_i)) with the sign resolved pointwise.
inline LadderPair build_ladder4(const PotentialBranch& branch, double omega, const RootSet& rs,
                                bool validate = true) {
  detail::require_omega(omega);
  if (rs.order() != 4) throw std::invalid_argument("build_ladder4: root set is not order 4");
  if (std::abs(rs.omega() - omega) > 1e-12 * omega) {
    throw InconsistentInputError("build_ladder4: root set frequency differs from omega");
  }
  const std::vector<double> roots = rs.roots();
  const SymmetricSums s = rs.sums();
  for (double x : validate ? domain_samples(branch, 16) : std::vector<double>{}) {
    const auto [v, dv] = branch.V_dV(x);
    const order4::F0Choice ch = order4::resolve_f0(omega, x, v, dv, roots, kConsistencyTolerance);
    const double f2 = order4::f2(omega, x, v), f3 = order4::f3(omega, x);
    const double r = std::max({order4::product_p6(s, v, f2, f3).normalized(),
                               order4::product_p4(s, v, ch.f0, ch.f1, f2, f3).normalized(),
                               order4::product_p2(s, v, ch.f0, ch.f1, f2).normalized(),
                               order4::product_p0(s, v, ch.f0).normalized()});
    if (!(r <= kConsistencyTolerance)) {
      throw InconsistentInputError(detail::describe_residual("build_ladder4: branch does not match root set", x, r));
    }
  }
  auto b = std::make_shared<const PotentialBranch>(branch);
  const double sign_tolerance = validate ? kConsistencyTolerance : std::numeric_limits<double>::infinity();
  auto fn = [b, omega, roots, sign_tolerance](double x) {
    const auto [v, dv] = b->V_dV(x);
    const order4::F0Choice ch = order4::resolve_f0(omega, x, v, dv, roots, sign_tolerance);
    return std::vector<double>{ch.f0, ch.f1, order4::f2(omega, x, v), order4::f3(omega, x)};
  };
  return detail::label_pair(branch, 4, omega, fn, "A4");
}

/// Everything the verification, superintegrability and dynamics layers need for one axis.
struct LadderSystem {
  PotentialBranch branch;
  int order;
  double omega;
  std::optional<RootSet> roots;
  LadderPair pair;
  PhaPolynomials pha;
  Observable hamiltonian;
};

/// Builds the pair for a branch of order 1, 3 or 4. The root set defaults to the one
/// recorded in the branch parameters.
inline LadderSystem make_ladder_system(const PotentialBranch& branch, std::optional<RootSet> rs = std::nullopt,
                                       bool validate = true) {
  if (!rs) rs = branch.params().roots;
  if (rs) {
    const double omega = rs->omega();
    if (rs->order() == 3) {
      return {branch,   3, omega, rs, build_ladder3(branch, omega, SymmetricInvariants::of(*rs), validate), pha_polynomials(*rs),
              hamiltonian_1d(branch)};
    }
    return {branch, 4, omega, rs, build_ladder4(branch, omega, *rs, validate), pha_polynomials(*rs), hamiltonian_1d(branch)};
  }
  if (branch.params().order == 1) {
    const double omega = branch.params().omega;
    return {branch, 1, omega, std::nullopt, build_ladder1(omega), pha_polynomials_harmonic(omega), hamiltonian_1d(branch)};
  }
  throw std::invalid_argument("make_ladder_system: branch '" + branch.label() +
                              "' has no root set; ladder pairs exist for orders 1, 3 and 4");
}

}  // namespace ladderlab

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ladderlab/errors.hpp"
#include "ladderlab/ladder.hpp"
#include "ladderlab/phase_core.hpp"
#include "ladderlab/verify.hpp"

namespace ladderlab {

struct ComposeOptions {
  /// Run verify_system on both axes first and refuse axes that fail.
  bool verify_axes = true;
  /// Require m1 w1 = m2 w2. Disabled only for detuned negative controls.
  bool enforce_resonance = true;
  double resonance_tolerance = 1e-12;
  VerifyOptions verify{};
};

/// H = H1(x1, p1) + H2(x2, p2) with m1 w1 = m2 w2 = w.
class Hamiltonian2D {
 public:
  Hamiltonian2D(LadderSystem axis1, LadderSystem axis2, int m1, int m2)
      : axis1_(std::move(axis1)), axis2_(std::move(axis2)), m1_(m1), m2_(m2), omega_(m1 * axis1_.omega) {
    h1_ = hamiltonian_1d(axis1_.branch, 2, 0);
    h2_ = hamiltonian_1d(axis2_.branch, 2, 1);
  }

  const LadderSystem& axis1() const noexcept { return axis1_; }
  const LadderSystem& axis2() const noexcept { return axis2_; }
  int m1() const noexcept { return m1_; }
  int m2() const noexcept { return m2_; }
  double omega() const noexcept { return omega_; }
  /// Momentum degree n1 m1 + n2 m2 of the product integrals.
  int integral_degree() const noexcept { return axis1_.order * m1_ + axis2_.order * m2_; }
  double resonance_mismatch() const noexcept { return m1_ * axis1_.omega - m2_ * axis2_.omega; }

  const Observable& h1() const noexcept { return h1_; }
  const Observable& h2() const noexcept { return h2_; }
  bool in_domain(const PhaseState& s) const {
    return axis1_.branch.in_domain(s.x(0)) && axis2_.branch.in_domain(s.x(1));
  }

 private:
  LadderSystem axis1_, axis2_;
  int m1_, m2_;
  double omega_;
  Observable h1_, h2_;
};

/// Smallest coprime (m1, m2) with m1 w1 = m2 w2, searching up to max_m.
inline std::pair<int, int> resonance_integers(double omega1, double omega2, int max_m = 64, double tol = 1e-12) {
  for (int m1 = 1; m1 <= max_m; ++m1) {
    const double m2f = m1 * omega1 / omega2;
    const int m2 = static_cast<int>(std::lround(m2f));
    if (m2 < 1) continue;
    if (std::abs(m1 * omega1 - m2 * omega2) <= tol * std::max(1.0, m1 * omega1)) return {m1, m2};
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "no resonance m1 w1 = m2 w2 with m <= %d for w1 = %.17g, w2 = %.17g", max_m, omega1,
                omega2);
  throw ResonanceError(buf, omega1 - omega2);
}

inline Hamiltonian2D compose(LadderSystem axis1, LadderSystem axis2, int m1, int m2, const ComposeOptions& opt = {}) {
  if (m1 < 1 || m2 < 1) throw std::invalid_argument("compose: resonance integers must be positive");
  if (std::gcd(m1, m2) != 1) throw std::invalid_argument("compose: resonance integers must be coprime");
  const double mismatch = m1 * axis1.omega - m2 * axis2.omega;
  if (opt.enforce_resonance && std::abs(mismatch) > opt.resonance_tolerance * std::max(1.0, m1 * axis1.omega)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "resonance violated: m1 w1 - m2 w2 = %.3e", mismatch);
    throw ResonanceError(buf, mismatch);
  }
  if (opt.verify_axes) {
    for (const LadderSystem* ax : {&axis1, &axis2}) {
      const VerificationReport rep = verify_system(*ax, opt.verify);
      if (!rep.pass()) throw InconsistentInputError("compose: axis '" + ax->branch.label() + "' fails verification");
    }
  }
  return Hamiltonian2D(std::move(axis1), std::move(axis2), m1, m2);
}

/// Resonance integers found automatically.
inline Hamiltonian2D compose(LadderSystem axis1, LadderSystem axis2, const ComposeOptions& opt = {}) {
  const auto [m1, m2] = resonance_integers(axis1.omega, axis2.omega);
  return compose(std::move(axis1), std::move(axis2), m1, m2, opt);
}

/// H, K, I1, I2 and the real pair J1 = Im I1, J2 = Re I2 as observables on 2D states.
struct IntegralSet {
  Observable H, K, I1, I2, J1, J2;
  /// X = (A1+)^m1 (A2-)^m2; I1 = X - conj-member, I2 = X + conj-member.
  Observable X;
  int degree = 0;
};

namespace detail {

struct ProductValue {
  Complex value;
  Gradient gradient;
};

// (A1^s1)^m1 (A2^s2)^m2 where raising_i selects A+ on axis i, optionally with its gradient.
inline ProductValue ladder_product(const Hamiltonian2D& h, bool raising1, bool raising2, const PhaseState& s,
                                   bool with_gradient) {
  const LadderOperator& a1 = raising1 ? h.axis1().pair.raising : h.axis1().pair.lowering;
  const LadderOperator& a2 = raising2 ? h.axis2().pair.raising : h.axis2().pair.lowering;
  const Complex v1 = a1(s.x(0), s.p(0)), v2 = a2(s.x(1), s.p(1));
  const int m1 = h.m1(), m2 = h.m2();
  const Complex p1 = std::pow(v1, m1 - 1), p2 = std::pow(v2, m2 - 1);
  const Complex w1 = p1 * v1, w2 = p2 * v2;
  if (!with_gradient) return {w1 * w2, {}};
  const auto [d1x, d1p] = a1.gradient(s.x(0), s.p(0));
  const auto [d2x, d2p] = a2.gradient(s.x(1), s.p(1));
  const Complex s1 = static_cast<double>(m1) * p1 * w2, s2 = static_cast<double>(m2) * w1 * p2;
  return {w1 * w2, Gradient{s1 * d1x, s1 * d1p, s2 * d2x, s2 * d2p}};
}

inline Observable product_observable(const Hamiltonian2D& h, bool raising1, bool raising2, std::string name) {
  auto hp = std::make_shared<const Hamiltonian2D>(h);
  return Observable(
      2, [hp, raising1, raising2](const PhaseState& s) { return ladder_product(*hp, raising1, raising2, s, false).value; },
      [hp, raising1, raising2](const PhaseState& s) { return ladder_product(*hp, raising1, raising2, s, true).gradient; },
      std::move(name));
}

inline Observable real_part(const Observable& f, bool imaginary, std::string name) {
  auto take = [imaginary](Complex z) { return Complex(imaginary ? z.imag() : z.real(), 0.0); };
  return Observable(
      f.arity(), [f, take](const PhaseState& s) { return take(f(s)); },
      [f, take](const PhaseState& s) {
        Gradient g = gradient_of(f, s);
        for (auto& v : g) v = take(v);
        return g;
      },
      std::move(name));
}

}  // namespace detail

inline IntegralSet integrals(const Hamiltonian2D& h) {
  IntegralSet set;
  set.H = (h.h1() + h.h2()).named("H");
  set.K = (h.h1() + Complex(-1.0) * h.h2()).named("K");
  set.X = detail::product_observable(h, true, false, "X");
  const Observable y = detail::product_observable(h, false, true, "Y");
  set.I1 = (set.X + Complex(-1.0) * y).named("I1");
  set.I2 = (set.X + y).named("I2");
  set.J1 = detail::real_part(set.I1, true, "J1");
  set.J2 = detail::real_part(set.I2, false, "J2");
  set.degree = h.integral_degree();
  return set;
}

/// Random 2D states with both positions inside the axis domains.
inline std::vector<PhaseState> random_states_2d(const Hamiltonian2D& h, std::size_t n, std::mt19937_64& rng,
                                                double momentum_range = 3.0, double half_width = 4.0) {
  const std::vector<double> x1 = random_domain_points(h.axis1().branch, n, rng, half_width);
  const std::vector<double> x2 = random_domain_points(h.axis2().branch, n, rng, half_width);
  std::uniform_real_distribution<double> mom(-momentum_range, momentum_range);
  std::vector<PhaseState> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p1 = mom(rng), p2 = mom(rng);
    out.push_back(PhaseState::two_d(x1[i], p1, x2[i], p2));
  }
  return out;
}

struct ConservationCheck {
  /// max over states of |{H, F}| / (1 + |F|) for F = K, I1, I2.
  double K = 0.0, I1 = 0.0, I2 = 0.0;
  std::size_t states = 0;
  double max() const { return std::max({K, I1, I2}); }
};

inline ConservationCheck conservation_bracket_check(const Hamiltonian2D& h, std::span<const PhaseState> states) {
  const IntegralSet ints = integrals(h);
  ConservationCheck out;
  out.states = states.size();
  for (const PhaseState& s : states) {
    auto norm = [&](const Observable& f) { return std::abs(poisson_bracket(ints.H, f, s)) / (1.0 + std::abs(f(s))); };
    out.K = std::max(out.K, norm(ints.K));
    out.I1 = std::max(out.I1, norm(ints.I1));
    out.I2 = std::max(out.I2, norm(ints.I2));
  }
  return out;
}

/// One fitted relation b = sigma a over the sampled states.
struct RelationFit {
  std::string id;
  Complex sigma{0.0, 0.0};
  double max_deviation = 0.0;
  std::vector<double> deviations;
};

struct AlgebraReport {
  RelationFit k_i1;   // {K, I1} = sigma 2w I2
  RelationFit k_i2;   // {K, I2} = sigma 2w I1
  RelationFit i1_i2;  // {I1, I2} = sigma closed form
  double tolerance = 1e-5;
  bool pass() const {
    for (const RelationFit* f : {&k_i1, &k_i2, &i1_i2}) {
      if (!(f->max_deviation <= tolerance) || !(std::abs(std::abs(f->sigma) - 1.0) <= tolerance)) return false;
    }
    return true;
  }
};

namespace detail {

/// Weighted least squares sigma = sum conj(a) b / sum |a|^2; per-state deviation
/// |b - sigma a| / max(|a|, |b|, 1e-3 rms|a|).
inline RelationFit fit_relation(std::string id, const std::vector<Complex>& a, const std::vector<Complex>& b) {
  RelationFit fit{std::move(id)};
  Complex num{0.0, 0.0};
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::conj(a[i]) * b[i];
    den += std::norm(a[i]);
  }
  if (den == 0.0) {
    // Both sides vanish identically (e.g. a zero-mode energy everywhere): record sigma = 1.
    fit.sigma = 1.0;
  } else {
    fit.sigma = num / den;
  }
  const double floor = 1e-3 * std::sqrt(den / std::max<std::size_t>(a.size(), 1));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor, std::numeric_limits<double>::min()});
    fit.deviations.push_back(std::abs(b[i] - fit.sigma * a[i]) / scale);
    fit.max_deviation = std::max(fit.max_deviation, fit.deviations.back());
  }
  return fit;
}

}  // namespace detail

/// 2 Q1^{m1-1} Q2^{m2-1} (m2^2 Q1 P2 - m1^2 Q2 P1) at E1 = H1, E2 = H2.
inline Complex i1_i2_closed_form(const Hamiltonian2D& h, double e1, double e2) {
  const PhaPolynomials& a = h.axis1().pha;
  const PhaPolynomials& b = h.axis2().pha;
  const double q1 = a.Q(e1), q2 = b.Q(e2);
  const Complex p1 = a.P(e1), p2 = b.P(e2);
  const double m1 = h.m1(), m2 = h.m2();
  return 2.0 * std::pow(q1, m1 - 1.0) * std::pow(q2, m2 - 1.0) * (m2 * m2 * q1 * p2 - m1 * m1 * q2 * p1);
}

/// Fits the unit-modulus constants of the polynomial Poisson algebra of K, I1, I2 and
/// checks the fits hold at every state. Throws AlgebraMismatchError when any relation
/// deviates by more than `tol` (unless throw_on_mismatch is false).
inline AlgebraReport algebra_check(const Hamiltonian2D& h, std::span<const PhaseState> states, double tol = 1e-5,
                                   bool throw_on_mismatch = true) {
  const IntegralSet ints = integrals(h);
  std::vector<Complex> a1, b1, a2, b2, a3, b3;
  const double w2 = 2.0 * h.omega();
  for (const PhaseState& s : states) {
    const Complex i1 = ints.I1(s), i2 = ints.I2(s);
    a1.push_back(w2 * i2);
    b1.push_back(poisson_bracket(ints.K, ints.I1, s));
    a2.push_back(w2 * i1);
    b2.push_back(poisson_bracket(ints.K, ints.I2, s));
    a3.push_back(i1_i2_closed_form(h, h.h1()(s).real(), h.h2()(s).real()));
    b3.push_back(poisson_bracket(ints.I1, ints.I2, s));
  }
  AlgebraReport rep;
  rep.tolerance = tol;
  rep.k_i1 = detail::fit_relation("{K,I1}=sigma 2w I2", a1, b1);
  rep.k_i2 = detail::fit_relation("{K,I2}=sigma 2w I1", a2, b2);
  rep.i1_i2 = detail::fit_relation("{I1,I2}=sigma closed form", a3, b3);
  if (throw_on_mismatch && !rep.pass()) {
    const RelationFit* worst = &rep.k_i1;
    for (const RelationFit* f : {&rep.k_i2, &rep.i1_i2}) {
      if (!(f->max_deviation <= worst->max_deviation)) worst = f;
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "algebra mismatch in %s: max deviation %.3e, |sigma| = %.12g", worst->id.c_str(),
                  worst->max_deviation, std::abs(worst->sigma));
    throw AlgebraMismatchError(buf, worst->deviations);
  }
  return rep;
}

struct IndependenceResult {
  std::vector<int> ranks;
  double rank3_fraction = 0.0;
};

/// Rank of the 3x4 real gradient matrix of (H, K, I1 / i) per state. Rows are normalized,
/// then singular values above 1e-8 of the largest count.
inline IndependenceResult functional_independence(const Hamiltonian2D& h, std::span<const PhaseState> states,
                                                  double rel_threshold = 1e-8) {
  const IntegralSet ints = integrals(h);
  IndependenceResult out;
  int full = 0;
  for (const PhaseState& s : states) {
    Eigen::Matrix<double, 3, 4> m;
    const Gradient gh = gradient_of(ints.H, s), gk = gradient_of(ints.K, s), gi = gradient_of(ints.I1, s);
    for (int k = 0; k < 4; ++k) {
      m(0, k) = gh[static_cast<std::size_t>(k)].real();
      m(1, k) = gk[static_cast<std::size_t>(k)].real();
      m(2, k) = gi[static_cast<std::size_t>(k)].imag();
    }
    for (int r = 0; r < 3; ++r) {
      const double n = m.row(r).norm();
      if (n > 0.0) m.row(r) /= n;
    }
    Eigen::JacobiSVD<Eigen::Matrix<double, 3, 4>> svd(m);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (int k = 0; k < sv.size(); ++k) rank += sv(k) > rel_threshold * sv(0) ? 1 : 0;
    out.ranks.push_back(rank);
    full += rank == 3 ? 1 : 0;
  }
  out.rank3_fraction = states.empty() ? 0.0 : static_cast<double>(full) / static_cast<double>(states.size());
  return out;
}

struct RealityCheck {
  /// max |Re I1| / (1 + |I1|) and max |Im I2| / (1 + |I2|).
  double re_i1 = 0.0, im_i2 = 0.0;
};

inline RealityCheck reality_check(const Hamiltonian2D& h, std::span<const PhaseState> states) {
  const IntegralSet ints = integrals(h);
  RealityCheck out;
  for (const PhaseState& s : states) {
    const Complex i1 = ints.I1(s), i2 = ints.I2(s);
    out.re_i1 = std::max(out.re_i1, std::abs(i1.real()) / (1.0 + std::abs(i1)));
    out.im_i2 = std::max(out.im_i2, std::abs(i2.imag()) / (1.0 + std::abs(i2)));
  }
  return out;
}

/// Total degree in (p1, p2) of f at fixed positions, from a tensor Chebyshev interpolant of
/// degree max_degree per momentum on [-range, range]^2. Coefficients below rel_tol of the
/// largest are treated as zero.
inline int momentum_degree(const Observable& f, double x1, double x2, int max_degree, double range = 2.0,
                           double rel_tol = 1e-9) {
  const int n = max_degree + 1;
  std::vector<double> nodes(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) nodes[static_cast<std::size_t>(j)] = std::cos(M_PI * (j + 0.5) / n);
  Eigen::MatrixXcd vals(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      vals(a, b) = f(PhaseState::two_d(x1, range * nodes[static_cast<std::size_t>(a)], x2,
                                       range * nodes[static_cast<std::size_t>(b)]));
    }
  }
  // Discrete Chebyshev transform in each direction.
  Eigen::MatrixXd t(n, n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      t(k, j) = (k == 0 ? 1.0 : 2.0) / n * std::cos(M_PI * k * (j + 0.5) / n);
    }
  }
  const Eigen::MatrixXcd c = t.cast<Complex>() * vals * t.transpose().cast<Complex>();
  const double cmax = c.cwiseAbs().maxCoeff();
  int degree = -1;
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) {
      if (std::abs(c(k, l)) > rel_tol * cmax) degree = std::max(degree, k + l);
    }
  }
  return degree;
}

struct DegreeCheck {
  int expected = 0;
  int product = 0;
  int i1 = 0;
  int i2 = 0;
  /// X has exact degree N and max(deg I1, deg I2) = N.
  bool pass() const { return product == expected && std::max(i1, i2) == expected; }
};

inline DegreeCheck degree_check(const Hamiltonian2D& h, double x1, double x2) {
  const IntegralSet ints = integrals(h);
  const int cap = ints.degree + 3;
  return {ints.degree, momentum_degree(ints.X, x1, x2, cap), momentum_degree(ints.I1, x1, x2, cap),
          momentum_degree(ints.I2, x1, x2, cap)};
}

}  // namespace ladderlab

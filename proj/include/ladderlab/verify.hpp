#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ladderlab/errors.hpp"
#include "ladderlab/finite_difference.hpp"
#include "ladderlab/ladder.hpp"
#include "ladderlab/ladder_algebra.hpp"
#include "ladderlab/phase_core.hpp"
#include "ladderlab/potentials.hpp"

namespace ladderlab {

/// Pointwise residuals over x samples; samples too close to a domain edge for the
/// stencil are listed in `excluded`.
struct SampleResiduals {
  std::vector<double> x;
  std::vector<double> residual;
  std::vector<double> excluded;

  double max() const {
    double m = 0.0;
    for (double r : residual) m = std::max(m, std::isnan(r) ? std::numeric_limits<double>::infinity() : r);
    return m;
  }
};

struct ReportEntry {
  std::string id;
  double max_residual = 0.0;
  double tolerance = 0.0;
  std::size_t samples = 0;
  bool normative = true;

  bool pass() const { return max_residual <= tolerance; }
};

struct VerificationReport {
  std::string subject;
  std::vector<ReportEntry> entries;
  std::vector<double> excluded_samples;
  std::size_t state_count = 0;
  Complex sigma_lowering{0.0, 0.0};
  Complex sigma_raising{0.0, 0.0};

  /// True when every normative residual is below its tolerance.
  bool pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const ReportEntry& e) { return !e.normative || e.pass(); });
  }

  const ReportEntry* find(const std::string& id) const {
    for (const auto& e : entries) {
      if (e.id == id) return &e;
    }
    return nullptr;
  }

  void add(std::string id, double max_residual, double tolerance, std::size_t samples, bool normative = true) {
    entries.push_back({std::move(id), max_residual, tolerance, samples, normative});
  }

  void write_text(std::ostream& os) const {
    char buf[160];
    os << "verification: " << subject << "\n";
    std::snprintf(buf, sizeof buf, "%-22s %14s %10s %8s  %s\n", "equation", "max_residual", "tolerance", "samples",
                  "status");
    os << buf;
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof buf, "%-22s %14.3e %10.1e %8zu  %s\n", e.id.c_str(), e.max_residual, e.tolerance,
                    e.samples, !e.normative ? "(audit)" : e.pass() ? "pass" : "FAIL");
      os << buf;
    }
    if (!excluded_samples.empty()) os << "excluded samples near domain edges: " << excluded_samples.size() << "\n";
    os << "overall: " << (pass() ? "PASS" : "FAIL") << "\n";
  }

  /// `equation,max_residual,tolerance,pass`; audit-only rows report pass as their own check.
  void write_csv(std::ostream& os) const {
    os << "equation,max_residual,tolerance,pass\n";
    char buf[160];
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%s\n", e.id.c_str(), e.max_residual, e.tolerance,
                    e.pass() ? "true" : "false");
      os << buf;
    }
  }
};

struct VerifyTolerances {
  double ode = 1e-5;
  double chain = 1e-5;
  double algebraic = 1e-8;
  double bracket = 1e-6;
  double product = 1e-8;
  double phase = 1e-6;
};

/// Largest stencil step, relative to max(1, |x|); the working step is chosen adaptively below it.
inline constexpr double kStencilStep = 1e-3;

namespace detail {

/// Largest admissible stencil step at x (the five points must stay inside the domain),
/// or 0 when it falls below min_fraction * max(1, |x|).
inline double max_stencil_step(const PotentialBranch& branch, double x, double min_fraction = 1e-9) {
  const double h = std::min(kStencilStep * std::max(1.0, std::abs(x)), edge_distance(branch, x) / 2.5);
  return h > min_fraction * std::max(1.0, std::abs(x)) ? h : 0.0;
}

/// Smallest relative step for the ODE residual; below it roundoff in V''' (~eps V' / h^2) dominates.
inline constexpr double kOdeMinStep = 1e-4;

struct LocalDerivatives {
  double v, dv, d2v, d3v;
};

inline LocalDerivatives derivatives_at(const PotentialBranch& branch, double x, double h_max) {
  auto dv = [&branch](double t) { return std::vector<double>{branch.dV(t)}; };
  const double d2 = adaptive_derivative(dv, x, h_max, 1)[0];
  const double d3 = adaptive_derivative(dv, x, h_max, 2)[0];
  const auto [v, d1] = branch.V_dV(x);
  return {v, d1, d2, d3};
}

inline Residual ode3_terms(double omega, double x, const LocalDerivatives& d) {
  const double w2 = omega * omega;
  return Residual::of({0.5 * w2 * w2 * x * x, -3.0 * w2 * d.v, -3.0 * w2 * x * d.dv, 3.0 * d.dv * d.dv,
                       -0.5 * w2 * x * x * d.d2v, 3.0 * d.v * d.d2v});
}

/// The third-order equation multiplied through by (w^2 - V'').
inline Residual ode4_terms(double omega, double x, const LocalDerivatives& d) {
  const double w2 = omega * omega;
  const double m = w2 - d.d2v;
  const double inner_v2 = 16.0 * d.v + x * (-2.0 * w2 * x + 9.0 * d.dv);
  const double outer = 3.0 * d.dv * (8.0 * d.v + x * (-w2 * x + 2.0 * d.dv));
  return Residual::of({m * w2 * w2 * x * x, -8.0 * m * w2 * d.v, -12.0 * m * w2 * x * d.dv, 30.0 * m * d.dv * d.dv,
                       2.0 * m * inner_v2 * d.d2v, outer * d.d3v});
}

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

/// Residual of the second-order (order 3) or third-order (order 4) equation for V, with
/// V'' and V''' from adaptive five-point differences of V'. Normalized per sample.
inline SampleResiduals ode_residual(int order, const PotentialBranch& branch, double omega, std::span<const double> xs) {
  if (order != 3 && order != 4) throw std::invalid_argument("ode_residual: order must be 3 or 4");
  SampleResiduals out;
  for (double x : xs) {
    const double h = detail::max_stencil_step(branch, x, detail::kOdeMinStep);
    if (h == 0.0) {
      out.excluded.push_back(x);
      continue;
    }
    const detail::LocalDerivatives d = detail::derivatives_at(branch, x, h);
    if (order == 4 && std::abs(omega * omega - d.d2v) <= 1e-8) {
      out.excluded.push_back(x);
      continue;
    }
    const Residual r = order == 3 ? detail::ode3_terms(omega, x, d) : detail::ode4_terms(omega, x, d);
    out.x.push_back(x);
    out.residual.push_back(r.normalized());
  }
  return out;
}

/// Residuals of the coefficient chain obtained from {H, A} = sigma w A power by power in p,
/// keyed `chain_p<k>`; derivatives of f_i by adaptive five-point differences.
inline std::map<std::string, SampleResiduals> chain_residuals(const LadderSystem& sys, std::span<const double> xs) {
  std::map<std::string, SampleResiduals> out;
  const int n = sys.order;
  if (n != 3 && n != 4) return out;
  const double w = sys.omega;
  for (double x : xs) {
    const double h = detail::max_stencil_step(sys.branch, x);
    if (h == 0.0) {
      for (int k = 0; k <= n; ++k) out["chain_p" + std::to_string(k)].excluded.push_back(x);
      continue;
    }
    const std::vector<double> f = sys.pair.lowering.coefficients(x);
    const std::vector<double> df = adaptive_derivative(
        [&sys](double t) { return sys.pair.lowering.coefficients(t); }, x, h, 1);
    const double dv = sys.branch.dV(x);
    std::vector<std::pair<int, Residual>> rows;
    if (n == 3) {
      rows = {{3, Residual::of({-w, df[2]})},
              {2, Residual::of({-w * f[2], -df[1], 3.0 * dv})},
              {1, Residual::of({-w * f[1], df[0], -2.0 * f[2] * dv})},
              {0, Residual::of({-w * f[0], f[1] * dv})}};
    } else {
      rows = {{4, Residual::of({-w, -df[3]})},
              {3, Residual::of({-w * f[3], df[2], -4.0 * dv})},
              {2, Residual::of({-w * f[2], -df[1], 3.0 * f[3] * dv})},
              {1, Residual::of({-w * f[1], df[0], -2.0 * f[2] * dv})},
              {0, Residual::of({-w * f[0], f[1] * dv})}};
    }
    for (const auto& [k, r] : rows) {
      auto& s = out["chain_p" + std::to_string(k)];
      s.x.push_back(x);
      s.residual.push_back(r.normalized());
    }
  }
  return out;
}

/// Residuals of the product identity matched power by power in p (`product_p<k>`), plus
/// the printed condensed relations as audit-only rows (`printed_*`).
inline std::map<std::string, SampleResiduals> algebraic_residuals(const LadderSystem& sys, std::span<const double> xs) {
  std::map<std::string, SampleResiduals> out;
  if (!sys.roots) return out;
  const SymmetricSums s = sys.roots->sums();
  const SymmetricInvariants inv = SymmetricInvariants::of(*sys.roots);
  const double w = sys.omega;
  auto push = [&out](const std::string& id, double x, const Residual& r) {
    auto& e = out[id];
    e.x.push_back(x);
    e.residual.push_back(r.normalized());
  };
  for (double x : xs) {
    if (!sys.branch.in_domain(x)) {
      out["product_p0"].excluded.push_back(x);
      continue;
    }
    const double v = sys.branch.V(x);
    const std::vector<double> f = sys.pair.lowering.coefficients(x);
    if (sys.order == 3) {
      push("product_p4", x, order3::product_p4(s, v, f[0], f[1], f[2]));
      push("product_p2", x, order3::product_p2(s, v, f[0], f[1], f[2]));
      push("product_p0", x, order3::product_p0(s, v, f[0]));
      push("reduced_first", x, order3::reduced_first(w, inv.d, x, v, f[0]));
      push("reduced_second", x, order3::reduced_second(w, inv.d, inv.c, v, f[0]));
      push("printed_quartic", x, order3::printed_quartic(w, inv.d, x, v));
    } else {
      push("product_p6", x, order4::product_p6(s, v, f[2], f[3]));
      push("product_p4", x, order4::product_p4(s, v, f[0], f[1], f[2], f[3]));
      push("product_p2", x, order4::product_p2(s, v, f[0], f[1], f[2]));
      push("product_p0", x, order4::product_p0(s, v, f[0]));
      push("printed_f0_relation", x, order4::printed_f0_relation(inv.d, inv.c, *inv.e, v, f[0]));
      if (std::abs(w * x) >= kNearOriginThreshold) {
        push("printed_quintic", x, order4::printed_quintic(w, inv.d, inv.c, *inv.e, x, v));
      }
    }
  }
  return out;
}

/// Least-squares sigma in {H, A} = sigma w A and the per-state deviation
/// |{H,A} - sigma w A| / (sum of |terms| of the bracket + |w A|), which stays meaningful
/// where A is small.
struct PhaseFit {
  Complex sigma{0.0, 0.0};
  std::vector<double> deviations;
  double max_deviation = 0.0;
};

/// Fits sigma; throws NotALadderError (carrying the deviation profile) unless every state
/// agrees with sigma and sigma is +i or -i, both within `tolerance`.
inline PhaseFit bracket_phase_factor(const Observable& H, const Observable& A, double omega,
                                     std::span<const PhaseState> states, double tolerance = 1e-6) {
  struct Sample {
    Complex a, b;
    double scale;
  };
  std::vector<Sample> samples;
  Complex num{0.0, 0.0};
  double den = 0.0;
  for (const PhaseState& s : states) {
    const Complex a = A(s);
    if (std::abs(a) < 1e-8) continue;
    const Gradient dh = gradient_of(H, s), da = gradient_of(A, s);
    Complex b{0.0, 0.0};
    double scale = std::abs(omega * a);
    for (int i = 0; i < s.dim(); ++i) {
      const auto xi = static_cast<std::size_t>(2 * i), pi = xi + 1;
      b += dh[xi] * da[pi] - dh[pi] * da[xi];
      scale += std::abs(dh[xi] * da[pi]) + std::abs(dh[pi] * da[xi]);
    }
    // Weighted so each state counts by its own scale.
    const double wgt = 1.0 / (scale * scale);
    num += wgt * std::conj(omega * a) * b;
    den += wgt * std::norm(omega * a);
    samples.push_back({a, b, scale});
  }
  if (samples.empty()) throw NotALadderError("bracket phase: A vanishes at every sampled state", {});
  PhaseFit fit;
  fit.sigma = num / den;
  for (const Sample& sm : samples) {
    fit.deviations.push_back(std::abs(sm.b - fit.sigma * omega * sm.a) / sm.scale);
    fit.max_deviation = std::max(fit.max_deviation, fit.deviations.back());
  }
  const double off_axis = std::min(std::abs(fit.sigma - kI), std::abs(fit.sigma + kI));
  if (!(fit.max_deviation <= tolerance) || !(off_axis <= tolerance)) {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "'%s' is not a ladder function: sigma = %.9g%+.9gi, max deviation %.3e, distance to +-i %.3e",
                  A.name().c_str(), fit.sigma.real(), fit.sigma.imag(), fit.max_deviation, off_axis);
    throw NotALadderError(buf, fit.deviations);
  }
  return fit;
}

/// max over states of |A- A+ - Q(H)| / (1 + |Q(H)|).
inline double product_identity_check(const LadderSystem& sys, std::span<const PhaseState> states) {
  double worst = 0.0;
  for (const PhaseState& s : states) {
    const double q = sys.pha.Q(sys.hamiltonian(s).real());
    const Complex prod = sys.pair.lowering(s) * sys.pair.raising(s);
    worst = std::max(worst, std::abs(prod - q) / (1.0 + std::abs(q)));
  }
  return worst;
}

/// max over states of |{A-, A+} - P(H)| / (1 + |P(H)|).
inline double bracket_identity_check(const LadderSystem& sys, std::span<const PhaseState> states) {
  const Observable lo = sys.pair.lowering.observable(), ra = sys.pair.raising.observable();
  double worst = 0.0;
  for (const PhaseState& s : states) {
    const Complex p = sys.pha.P(Complex(sys.hamiltonian(s).real()));
    const Complex b = poisson_bracket(lo, ra, s);
    worst = std::max(worst, std::abs(b - p) / (1.0 + std::abs(p)));
  }
  return worst;
}

/// |A+ - conj(A-)| over states; zero by construction, kept as a guard.
inline double conjugation_check(const LadderSystem& sys, std::span<const PhaseState> states) {
  double worst = 0.0;
  for (const PhaseState& s : states) {
    worst = std::max(worst, std::abs(sys.pair.raising(s) - std::conj(sys.pair.lowering(s))));
  }
  return worst;
}

/// n uniform draws of x from the sampling pieces of the domain (see detail::sampling_pieces).
inline std::vector<double> random_domain_points(const PotentialBranch& branch, std::size_t n, std::mt19937_64& rng,
                                                double half_width = 4.0, double margin = 1e-3) {
  const auto pieces = detail::sampling_pieces(branch, half_width, margin);
  if (pieces.empty()) throw DomainError("branch '" + branch.label() + "' has an empty domain");
  std::uniform_real_distribution<double> u(0.0, detail::pieces_length(pieces));
  std::vector<double> xs;
  xs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) xs.push_back(detail::piece_point(pieces, u(rng)));
  return xs;
}

struct VerifyOptions {
  std::size_t states = 100;
  double momentum_range = 3.0;
  double half_width = 4.0;
  std::uint64_t seed = 20240607;
  VerifyTolerances tolerances;
};

/// Full residual suite for one ladder system: ODE, coefficient chain, product identity by
/// powers of p, bracket phase of both members, product and bracket identities.
inline VerificationReport verify_system(const LadderSystem& sys, const VerifyOptions& opt = {}) {
  VerificationReport rep;
  rep.subject = sys.branch.label() + " (order " + std::to_string(sys.order) + ", omega " + detail::fmt_g(sys.omega) + ")";
  std::mt19937_64 rng(opt.seed);
  const std::vector<double> xs = random_domain_points(sys.branch, opt.states, rng, opt.half_width);
  std::uniform_real_distribution<double> pdist(-opt.momentum_range, opt.momentum_range);
  std::vector<PhaseState> states;
  states.reserve(xs.size());
  for (double x : xs) states.push_back(PhaseState::one_d(x, pdist(rng)));
  rep.state_count = states.size();
  const VerifyTolerances& tol = opt.tolerances;

  if (sys.order == 3 || sys.order == 4) {
    const SampleResiduals ode = ode_residual(sys.order, sys.branch, sys.omega, xs);
    rep.add("ode", ode.max(), tol.ode, ode.residual.size());
    rep.excluded_samples = ode.excluded;
    for (const auto& [id, r] : chain_residuals(sys, xs)) rep.add(id, r.max(), tol.chain, r.residual.size());
    for (const auto& [id, r] : algebraic_residuals(sys, xs)) {
      rep.add(id, r.max(), tol.algebraic, r.residual.size(), id.rfind("printed_", 0) != 0);
    }
  }

  auto phase_entry = [&](const LadderOperator& op, Complex expected, Complex& sigma_out, const std::string& id) {
    const Observable a = op.observable();
    double dev = std::numeric_limits<double>::infinity();
    try {
      const PhaseFit fit = bracket_phase_factor(sys.hamiltonian, a, sys.omega, states, tol.phase);
      sigma_out = fit.sigma;
      dev = std::max(fit.max_deviation, std::abs(fit.sigma - expected));
    } catch (const NotALadderError& e) {
      // Report the larger of the worst deviation and the distance to the expected phase;
      // the entry fails either way.
      dev = std::numeric_limits<double>::infinity();
      if (!e.deviation_profile().empty()) {
        dev = *std::max_element(e.deviation_profile().begin(), e.deviation_profile().end());
        dev = std::max(dev, std::nextafter(tol.phase, std::numeric_limits<double>::infinity()));
      }
    }
    rep.add(id, dev, tol.phase, states.size());
  };
  phase_entry(sys.pair.lowering, kI, rep.sigma_lowering, "bracket_phase_lowering");
  phase_entry(sys.pair.raising, -kI, rep.sigma_raising, "bracket_phase_raising");
  rep.add("conjugation", conjugation_check(sys, states), 0.0, states.size());
  rep.add("product", product_identity_check(sys, states), tol.product, states.size());
  rep.add("bracket", bracket_identity_check(sys, states), tol.bracket, states.size());
  return rep;
}

}  // namespace ladderlab

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ladderlab/errors.hpp"
#include "ladderlab/ladder.hpp"
#include "ladderlab/phase_core.hpp"
#include "ladderlab/superint.hpp"

namespace ladderlab {

struct IntegrateOptions {
  double rel_tol = 1e-10;
  /// Absolute tolerance; defaults to rel_tol when not positive.
  double abs_tol = 0.0;
  /// Uniform output samples over [0, t_end] (at least 1000 intervals are used).
  std::size_t samples = 1000;
  double initial_step = 1e-3;
};

/// One accepted step of the embedded pair with its continuous extension.
struct DenseSegment {
  double t0 = 0.0;
  double h = 0.0;
  std::vector<std::array<double, 5>> rcont;

  std::vector<double> at(double t) const {
    const double th = (t - t0) / h, th1 = 1.0 - th;
    std::vector<double> y(rcont.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto& r = rcont[i];
      y[i] = r[0] + th * (r[1] + th1 * (r[2] + th * (r[3] + th1 * r[4])));
    }
    return y;
  }
};

struct Trajectory {
  int dim = 1;
  std::vector<double> times;
  std::vector<PhaseState> states;
  /// Conserved-quantity series sampled at `times` ("H", "K", "J1", "J2").
  std::map<std::string, std::vector<double>> series;
  /// max_t |F(t) - F(0)| / (1 + |F(0)|) per series.
  std::map<std::string, double> drift;
  std::optional<double> period_estimate;
  std::optional<double> closure_distance;
  std::vector<DenseSegment> segments;

  /// Dense-output state at any t in [times.front(), times.back()].
  PhaseState state_at(double t) const {
    if (segments.empty() || t < segments.front().t0 || t > segments.back().t0 + segments.back().h) {
      throw std::out_of_range("Trajectory::state_at: time outside the integrated span");
    }
    auto it = std::upper_bound(segments.begin(), segments.end(), t,
                               [](double v, const DenseSegment& s) { return v < s.t0; });
    if (it != segments.begin()) --it;
    return PhaseState::from_flat(it->at(t));
  }

  void add_series(const std::string& name, std::vector<double> values) {
    double d = 0.0;
    for (double v : values) d = std::max(d, std::abs(v - values.front()) / (1.0 + std::abs(values.front())));
    drift[name] = d;
    series[name] = std::move(values);
  }
};

namespace detail {

/// First-order form of Hamilton's equations x' = p, p' = -V'(x) on the flat state.
using Rhs = std::function<void(const std::vector<double>&, std::vector<double>&)>;

// Dormand-Prince 5(4) coefficients with the order-4 continuous extension.
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

struct RawSolution {
  std::vector<DenseSegment> segments;
};

/// Adaptive integration over [0, t_end]. A step whose stages leave the domain is retried
/// with a smaller step; when the step cannot shrink any further the trajectory is at the
/// domain edge (DomainExitError) or the problem is too stiff (StiffnessError).
inline RawSolution dopri5(const Rhs& f, std::vector<double> y, double t_end, const IntegrateOptions& opt) {
  using D = Dopri5;
  const std::size_t n = y.size();
  const double rtol = opt.rel_tol, atol = opt.abs_tol > 0.0 ? opt.abs_tol : opt.rel_tol;
  RawSolution out;
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n), y1(n);
  f(y, k1);
  double t = 0.0;
  double h = std::min(opt.initial_step, t_end);
  bool last_failed_domain = false;
  while (t < t_end) {
    if (t + h > t_end) h = t_end - t;
    const double h_min = 1e-13 * std::max(1.0, std::abs(t));
    if (h < h_min) {
      char buf[128];
      if (last_failed_domain) {
        std::snprintf(buf, sizeof buf, "trajectory leaves the potential domain at t = %.17g", t);
        throw DomainExitError(buf, t);
      }
      std::snprintf(buf, sizeof buf, "step size underflow at t = %.17g", t);
      throw StiffnessError(buf, t);
    }
    double err = 0.0;
    bool domain_fail = false;
    try {
      for (std::size_t i = 0; i < n; ++i) yt[i] = y[i] + h * D::a21 * k1[i];
      f(yt, k2);
      for (std::size_t i = 0; i < n; ++i) yt[i] = y[i] + h * (D::a31 * k1[i] + D::a32 * k2[i]);
      f(yt, k3);
      for (std::size_t i = 0; i < n; ++i) yt[i] = y[i] + h * (D::a41 * k1[i] + D::a42 * k2[i] + D::a43 * k3[i]);
      f(yt, k4);
      for (std::size_t i = 0; i < n; ++i)
        yt[i] = y[i] + h * (D::a51 * k1[i] + D::a52 * k2[i] + D::a53 * k3[i] + D::a54 * k4[i]);
      f(yt, k5);
      for (std::size_t i = 0; i < n; ++i)
        yt[i] = y[i] + h * (D::a61 * k1[i] + D::a62 * k2[i] + D::a63 * k3[i] + D::a64 * k4[i] + D::a65 * k5[i]);
      f(yt, k6);
      for (std::size_t i = 0; i < n; ++i)
        y1[i] = y[i] + h * (D::a71 * k1[i] + D::a73 * k3[i] + D::a74 * k4[i] + D::a75 * k5[i] + D::a76 * k6[i]);
      f(y1, k7);
      for (std::size_t i = 0; i < n; ++i) {
        const double e =
            h * (D::e1 * k1[i] + D::e3 * k3[i] + D::e4 * k4[i] + D::e5 * k5[i] + D::e6 * k6[i] + D::e7 * k7[i]);
        const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(y1[i]));
        err += (e / sc) * (e / sc);
      }
      err = std::sqrt(err / static_cast<double>(n));
      if (!std::isfinite(err)) domain_fail = true;
    } catch (const DomainError&) {
      domain_fail = true;
    }
    if (domain_fail) {
      last_failed_domain = true;
      h *= 0.25;
      continue;
    }
    if (err <= 1.0) {
      DenseSegment seg{t, h, std::vector<std::array<double, 5>>(n)};
      for (std::size_t i = 0; i < n; ++i) {
        const double dy = y1[i] - y[i], bspl = h * k1[i] - dy;
        seg.rcont[i] = {y[i], dy, bspl, dy - h * k7[i] - bspl,
                        h * (D::d1 * k1[i] + D::d3 * k3[i] + D::d4 * k4[i] + D::d5 * k5[i] + D::d6 * k6[i] +
                             D::d7 * k7[i])};
      }
      out.segments.push_back(std::move(seg));
      t = t + h;
      y = y1;
      k1 = k7;
      last_failed_domain = false;
    } else {
      last_failed_domain = false;
    }
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h *= err <= 1.0 ? factor : std::min(factor, 1.0);
  }
  return out;
}

inline Trajectory sample(RawSolution raw, int dim, double t_end, std::size_t samples) {
  Trajectory tr;
  tr.dim = dim;
  tr.segments = std::move(raw.segments);
  const std::size_t n = std::max<std::size_t>(samples, 1000);
  std::size_t seg = 0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = i == n ? t_end : t_end * static_cast<double>(i) / static_cast<double>(n);
    while (seg + 1 < tr.segments.size() && t > tr.segments[seg].t0 + tr.segments[seg].h) ++seg;
    tr.times.push_back(t);
    tr.states.push_back(PhaseState::from_flat(tr.segments[seg].at(t)));
  }
  return tr;
}

inline std::vector<double> flatten(const PhaseState& s) { return {s.flat().begin(), s.flat().end()}; }

inline void check_start(const PotentialBranch& b, double x, int axis) {
  if (!b.in_domain(x)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "initial x%d = %.17g is outside the domain of '%s'", axis + 1, x, b.label().c_str());
    throw DomainError(buf);
  }
}

}  // namespace detail

/// Hamilton's equations for H = p^2/2 + V(x) on one axis.
inline Trajectory integrate(const PotentialBranch& branch, const PhaseState& s0, double t_end,
                            const IntegrateOptions& opt = {}) {
  if (s0.dim() != 1) throw std::invalid_argument("integrate: expected a 1D state");
  if (!(t_end > 0.0)) throw std::invalid_argument("integrate: t_end must be positive");
  detail::check_start(branch, s0.x(), 0);
  const detail::Rhs f = [&branch](const std::vector<double>& y, std::vector<double>& dy) {
    dy[0] = y[1];
    dy[1] = -branch.dV(y[0]);
  };
  Trajectory tr = detail::sample(detail::dopri5(f, detail::flatten(s0), t_end, opt), 1, t_end, opt.samples);
  std::vector<double> h;
  for (const PhaseState& s : tr.states) h.push_back(0.5 * s.p() * s.p() + branch.V(s.x()));
  tr.add_series("H", std::move(h));
  return tr;
}

/// Hamilton's equations for the composed 2D system; records H and K.
inline Trajectory integrate(const Hamiltonian2D& sys, const PhaseState& s0, double t_end,
                            const IntegrateOptions& opt = {}) {
  if (s0.dim() != 2) throw std::invalid_argument("integrate: expected a 2D state");
  if (!(t_end > 0.0)) throw std::invalid_argument("integrate: t_end must be positive");
  const PotentialBranch& b1 = sys.axis1().branch;
  const PotentialBranch& b2 = sys.axis2().branch;
  detail::check_start(b1, s0.x(0), 0);
  detail::check_start(b2, s0.x(1), 1);
  const detail::Rhs f = [&b1, &b2](const std::vector<double>& y, std::vector<double>& dy) {
    dy[0] = y[1];
    dy[1] = -b1.dV(y[0]);
    dy[2] = y[3];
    dy[3] = -b2.dV(y[2]);
  };
  Trajectory tr = detail::sample(detail::dopri5(f, detail::flatten(s0), t_end, opt), 2, t_end, opt.samples);
  std::vector<double> h, k;
  for (const PhaseState& s : tr.states) {
    const double e1 = 0.5 * s.p(0) * s.p(0) + b1.V(s.x(0)), e2 = 0.5 * s.p(1) * s.p(1) + b2.V(s.x(1));
    h.push_back(e1 + e2);
    k.push_back(e1 - e2);
  }
  tr.add_series("H", std::move(h));
  tr.add_series("K", std::move(k));
  return tr;
}

/// Max relative drift of H, K, J1, J2 along a 2D trajectory; the series are stored on it.
inline std::map<std::string, double> conservation_report(Trajectory& traj, const IntegralSet& ints) {
  if (traj.dim != 2) throw std::invalid_argument("conservation_report: expected a 2D trajectory");
  const std::pair<const char*, const Observable*> items[] = {{"H", &ints.H}, {"K", &ints.K}, {"J1", &ints.J1},
                                                             {"J2", &ints.J2}};
  std::map<std::string, double> out;
  for (const auto& [name, obs] : items) {
    std::vector<double> v;
    v.reserve(traj.states.size());
    for (const PhaseState& s : traj.states) v.push_back((*obs)(s).real());
    traj.add_series(name, std::move(v));
    out[name] = traj.drift[name];
  }
  return out;
}

struct ClosureResult {
  bool closed = false;
  double period = 0.0;
  double distance = 0.0;
};

/// Earliest return of the trajectory to its initial state: local minima of the phase-space
/// distance to s0 on the samples are refined by golden-section search on the dense output,
/// and the first one below 10 tol is the period. Without one the smallest minimum is
/// reported with closed = false.
inline ClosureResult closure_detect(Trajectory& traj, double tol) {
  const PhaseState& s0 = traj.states.front();
  auto dist = [&](const PhaseState& s) {
    double d = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) d += (s.coord(k) - s0.coord(k)) * (s.coord(k) - s0.coord(k));
    return std::sqrt(d);
  };
  std::vector<double> d;
  for (const PhaseState& s : traj.states) d.push_back(dist(s));
  // Skip the departure from s0: start after the first local maximum.
  std::size_t start = 1;
  while (start + 1 < d.size() && !(d[start] >= d[start - 1] && d[start] >= d[start + 1])) ++start;
  ClosureResult best{false, 0.0, std::numeric_limits<double>::infinity()};
  constexpr double g = 0.6180339887498949;
  for (std::size_t i = start + 1; i + 1 < d.size(); ++i) {
    if (!(d[i] <= d[i - 1] && d[i] <= d[i + 1])) continue;
    double a = traj.times[i - 1], b = traj.times[i + 1];
    auto f = [&](double t) { return dist(traj.state_at(t)); };
    double c = b - g * (b - a), e = a + g * (b - a);
    double fc = f(c), fe = f(e);
    for (int it = 0; it < 80 && (b - a) > 1e-14 * std::max(1.0, b); ++it) {
      if (fc < fe) {
        b = e;
        e = c;
        fe = fc;
        c = b - g * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = e;
        fc = fe;
        e = a + g * (b - a);
        fe = f(e);
      }
    }
    const double tm = fc < fe ? c : e, dm = std::min(fc, fe);
    if (dm < 10.0 * tol) {
      best = {true, tm, dm};
      break;
    }
    if (dm < best.distance) best = {false, tm, dm};
  }
  if (std::isfinite(best.distance)) {
    traj.period_estimate = best.period;
    traj.closure_distance = best.distance;
  }
  return best;
}

struct AlgebraicTrajectory {
  std::vector<double> times;
  std::vector<PhaseState> states;
  double energy = 0.0;
  /// sqrt(Q(E)), the modulus |A-| must keep.
  double modulus = 0.0;
  /// max | |A-(x(t), p(t))| - sqrt(Q(E)) | / sqrt(Q(E)) over the output.
  double modulus_deviation = 0.0;
};

/// Reconstructs x(t), p(t) from the constants of motion: on H = E the phase of A- rotates
/// as arg A-(s0) - w t, so each time solves {H = E, arg A- = target} by Newton, continued
/// from the previous solution with a flow predictor on a fine internal step.
inline AlgebraicTrajectory algebraic_trajectory(const LadderSystem& sys, const PhaseState& s0,
                                                std::span<const double> t_grid) {
  if (s0.dim() != 1) throw std::invalid_argument("algebraic_trajectory: expected a 1D state");
  const LadderOperator& a = sys.pair.lowering;
  const PotentialBranch& b = sys.branch;
  const double omega = sys.omega;
  const double e = 0.5 * s0.p() * s0.p() + b.V(s0.x());
  const Complex a0 = a(s0.x(), s0.p());
  if (std::abs(a0) == 0.0) throw AlgebraicTrajectoryError("algebraic_trajectory: A- vanishes at s0", 0.0, 0.0);
  const double theta0 = std::arg(a0);
  AlgebraicTrajectory out;
  out.energy = e;
  out.modulus = std::sqrt(std::max(0.0, sys.pha.Q(e)));

  auto wrap = [](double v) { return std::remainder(v, 2.0 * M_PI); };
  double x = s0.x(), p = s0.p(), t = 0.0;
  auto solve = [&](double target, double tt) {
    for (int it = 0; it < 50; ++it) {
      const auto [v, dv] = b.V_dV(x);
      const Complex av = a(x, p);
      const auto [ax, ap] = a.gradient(x, p);
      const double r1 = 0.5 * p * p + v - e;
      const double r2 = wrap(std::arg(av) - target);
      const double scale_e = 1.0 + std::abs(e);
      if (std::abs(r1) <= 1e-14 * scale_e && std::abs(r2) <= 1e-13) return;
      // d arg A = Im(dA / A).
      const double gx = (ax / av).imag(), gp = (ap / av).imag();
      const double det = dv * gp - p * gx;
      if (det == 0.0 || !std::isfinite(det)) break;
      double dx = -(r1 * gp - p * r2) / det;
      double dp = -(dv * r2 - r1 * gx) / det;
      // Damp steps that would leave the domain.
      double lambda = 1.0;
      while (!b.in_domain(x + lambda * dx) && lambda > 1e-6) lambda *= 0.5;
      x += lambda * dx;
      p += lambda * dp;
      if (std::abs(dx) <= 1e-15 * std::max(1.0, std::abs(x)) && std::abs(dp) <= 1e-15 * std::max(1.0, std::abs(p)) &&
          std::abs(r1) <= 1e-12 * scale_e && std::abs(r2) <= 1e-11) {
        return;
      }
    }
    const double r1 = std::abs(0.5 * p * p + b.V(x) - e);
    const double r2 = std::abs(wrap(std::arg(a(x, p)) - target));
    if (r1 > 1e-10 * (1.0 + std::abs(e)) || r2 > 1e-9) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "algebraic_trajectory: Newton failed at t = %.17g", tt);
      throw AlgebraicTrajectoryError(buf, tt, std::max(r1, r2));
    }
  };

  const double max_dt = 0.02 / omega;
  for (double tg : t_grid) {
    if (tg < t) throw std::invalid_argument("algebraic_trajectory: time grid must be ascending from 0");
    while (t < tg) {
      const double dt = std::min(max_dt, tg - t);
      // Flow predictor, then Newton on the level set.
      const double dv = b.dV(x);
      double xn = x + dt * p, pn = p - dt * dv;
      if (b.in_domain(xn)) {
        x = xn;
        p = pn;
      }
      t += dt;
      solve(theta0 - omega * t, t);
    }
    if (tg == 0.0) solve(theta0, 0.0);
    out.times.push_back(tg);
    out.states.push_back(PhaseState::one_d(x, p));
    if (out.modulus > 0.0) {
      out.modulus_deviation = std::max(out.modulus_deviation, std::abs(std::abs(a(x, p)) - out.modulus) / out.modulus);
    }
  }
  return out;
}

/// `t,x1,p1,x2,p2,H,K,J1,J2` (1D: `t,x1,p1` and H); series that were not computed are omitted.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  std::vector<std::string> cols{"t", "x1", "p1"};
  if (traj.dim == 2) {
    cols.push_back("x2");
    cols.push_back("p2");
  }
  std::vector<const std::vector<double>*> series;
  for (const char* name : {"H", "K", "J1", "J2"}) {
    auto it = traj.series.find(name);
    if (it != traj.series.end()) {
      cols.emplace_back(name);
      series.push_back(&it->second);
    }
  }
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    put(traj.times[i]);
    const PhaseState& s = traj.states[i];
    for (int k = 0; k < traj.dim; ++k) {
      os << ",";
      put(s.x(k));
      os << ",";
      put(s.p(k));
    }
    for (const auto* v : series) {
      os << ",";
      put((*v)[i]);
    }
    os << "\n";
  }
}

}  // namespace ladderlab

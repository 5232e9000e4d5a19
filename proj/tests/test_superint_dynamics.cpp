#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "ladderlab/ladderlab.hpp"

using namespace ladderlab;

namespace {

constexpr double kPi = std::numbers::pi;

Hamiltonian2D figure_system(int sign) {
  return compose(make_ladder_system(closed_form_v4(1.0, 4.0, V4Variant::deformed, sign, RadicalBranch::analytic)),
                 make_ladder_system(closed_form_v4(2.0, 16.0, V4Variant::deformed, sign, RadicalBranch::analytic)), 2, 1);
}

Hamiltonian2D harmonic_system(double w1, double w2, int m1, int m2, bool enforce = true) {
  ComposeOptions opt;
  opt.enforce_resonance = enforce;
  return compose(make_ladder_system(harmonic_potential(w1)), make_ladder_system(harmonic_potential(w2)), m1, m2, opt);
}

std::vector<PhaseState> states_for(const Hamiltonian2D& h, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_states_2d(h, n, rng);
}

// Distance of t from the nearest positive multiple of 2 pi.
double off_two_pi_multiple(double t) {
  const double k = std::max(1.0, std::round(t / (2.0 * kPi)));
  return std::abs(t - k * 2.0 * kPi);
}

}  // namespace

// ---- composition ----

TEST(Superint, ResonanceIntegers) {
  EXPECT_EQ(resonance_integers(1.0, 2.0), std::make_pair(2, 1));
  EXPECT_EQ(resonance_integers(1.5, 1.5), std::make_pair(1, 1));
  EXPECT_EQ(resonance_integers(2.0, 3.0), std::make_pair(3, 2));
  EXPECT_THROW(resonance_integers(1.0, std::sqrt(2.0)), ResonanceError);
}

TEST(Superint, ComposeChoosesCommonFrequency) {
  const Hamiltonian2D h = compose(make_ladder_system(harmonic_potential(2.0)), make_ladder_system(harmonic_potential(3.0)));
  EXPECT_EQ(h.m1(), 3);
  EXPECT_EQ(h.m2(), 2);
  EXPECT_DOUBLE_EQ(h.omega(), 6.0);
  EXPECT_EQ(h.integral_degree(), 5);
  const Hamiltonian2D f = figure_system(1);
  EXPECT_DOUBLE_EQ(f.omega(), 2.0);
  EXPECT_EQ(f.integral_degree(), 12);
}

TEST(Superint, ComposeRejectsBadInput) {
  try {
    harmonic_system(1.0, 2.001, 2, 1);
    FAIL() << "expected ResonanceError";
  } catch (const ResonanceError& e) {
    EXPECT_NEAR(e.mismatch(), 2.0 - 2.001, 1e-12);
  }
  EXPECT_THROW(harmonic_system(1.0, 1.0, 2, 2), std::invalid_argument);
  const LadderSystem bad = make_ladder_system(closed_form_v3(1.0, 1.0, V3Variant::harmonic), RootSet::double_root(1.0, 1.1), false);
  EXPECT_THROW(compose(bad, make_ladder_system(harmonic_potential(1.1)), 1, 1), InconsistentInputError);
}

TEST(Superint, HarmonicIsotropicConservation) {
  const Hamiltonian2D h = harmonic_system(1.0, 1.0, 1, 1);
  EXPECT_LT(conservation_bracket_check(h, states_for(h, 50, 1)).max(), 1e-10);
}

TEST(Superint, FigureSystemConservation) {
  for (int sign : {1, -1}) {
    const Hamiltonian2D h = figure_system(sign);
    const ConservationCheck c = conservation_bracket_check(h, states_for(h, 50, 2));
    EXPECT_EQ(c.states, 50u);
    EXPECT_LT(c.max(), 1e-6) << "sign " << sign;
  }
}

TEST(Superint, DetunedControlBreaksConservation) {
  const Hamiltonian2D h = harmonic_system(1.0, 2.0 + 1e-3, 2, 1, false);
  const ConservationCheck c = conservation_bracket_check(h, states_for(h, 50, 3));
  EXPECT_GT(c.I1, 1e-5);
  EXPECT_LT(c.I1, 1e-1);
  EXPECT_LT(c.K, 1e-10);
}

TEST(Superint, AlgebraClosure) {
  std::vector<Hamiltonian2D> systems{harmonic_system(1.0, 1.0, 1, 1), harmonic_system(1.0, 2.0, 2, 1), figure_system(1),
                                     figure_system(-1)};
  systems.push_back(compose(make_ladder_system(closed_form_v3(1.0, 1.0, V3Variant::harmonic)),
                            make_ladder_system(closed_form_v3(1.0, 1.0, V3Variant::deformed, -1)), 1, 1));
  for (const Hamiltonian2D& h : systems) {
    const AlgebraReport rep = algebra_check(h, states_for(h, 50, 4));
    EXPECT_TRUE(rep.pass()) << h.axis1().branch.label() << " / " << h.axis2().branch.label();
    EXPECT_LT(std::abs(rep.k_i1.sigma + kI), 1e-6);
    EXPECT_LT(std::abs(rep.k_i2.sigma + kI), 1e-6);
    EXPECT_LT(std::abs(rep.i1_i2.sigma - 1.0), 1e-6);
  }
}

TEST(Superint, AlgebraAtZeroModeEnergy) {
  // Axis 1 at rest in the harmonic minimum: Q1 = 0 and m1 = 2, so {I1, I2} vanishes.
  const Hamiltonian2D h = harmonic_system(1.0, 2.0, 2, 1);
  const IntegralSet ints = integrals(h);
  for (const PhaseState& s : {PhaseState::two_d(0.0, 0.0, 0.7, -0.3), PhaseState::two_d(0.0, 0.0, -1.2, 2.0)}) {
    EXPECT_LT(std::abs(poisson_bracket(ints.I1, ints.I2, s)), 1e-8);
    const double e1 = h.h1()(s).real(), e2 = h.h2()(s).real();
    EXPECT_LT(std::abs(i1_i2_closed_form(h, e1, e2)), 1e-12);
  }
}

TEST(Superint, AlgebraMismatchThrows) {
  const Hamiltonian2D h = harmonic_system(1.0, 2.05, 2, 1, false);
  EXPECT_THROW(algebra_check(h, states_for(h, 20, 5)), AlgebraMismatchError);
  const AlgebraReport rep = algebra_check(h, states_for(h, 20, 5), 1e-5, false);
  EXPECT_FALSE(rep.pass());
}

TEST(SuperintProperty, FunctionalIndependence) {
  for (const Hamiltonian2D& h : {figure_system(1), figure_system(-1), harmonic_system(1.0, 2.0, 2, 1)}) {
    const IndependenceResult r = functional_independence(h, states_for(h, 100, 6));
    EXPECT_GE(r.rank3_fraction, 0.95);
  }
}

TEST(SuperintProperty, Reality) {
  for (const Hamiltonian2D& h : {figure_system(1), harmonic_system(1.0, 1.0, 1, 1)}) {
    const RealityCheck r = reality_check(h, states_for(h, 100, 7));
    EXPECT_LT(r.re_i1, 1e-10);
    EXPECT_LT(r.im_i2, 1e-10);
  }
}

TEST(SuperintProperty, MomentumDegree) {
  const Hamiltonian2D f = figure_system(1);
  const DegreeCheck d = degree_check(f, 0.8, -1.1);
  EXPECT_EQ(d.expected, 12);
  EXPECT_TRUE(d.pass()) << d.product << " " << d.i1 << " " << d.i2;
  const Hamiltonian2D h = harmonic_system(2.0, 3.0, 3, 2);
  const DegreeCheck e = degree_check(h, 0.4, 0.9);
  EXPECT_EQ(e.expected, 5);
  EXPECT_TRUE(e.pass()) << e.product << " " << e.i1 << " " << e.i2;
}

// ---- dynamics ----

TEST(Dynamics, HarmonicPeriod) {
  const Trajectory t = integrate(harmonic_potential(1.0), PhaseState::one_d(1.0, 0.0), 2.0 * kPi);
  const PhaseState& f = t.states.back();
  EXPECT_LT(std::abs(f.x() - 1.0), 1e-8);
  EXPECT_LT(std::abs(f.p()), 1e-8);
  EXPECT_GE(t.times.size(), 1001u);
  for (std::size_t i = 1; i < t.times.size(); ++i) ASSERT_GT(t.times[i], t.times[i - 1]);
  EXPECT_DOUBLE_EQ(t.times.back(), 2.0 * kPi);
  EXPECT_LT(t.drift.at("H"), 1e-9);
}

TEST(Dynamics, FigureTrajectories) {
  for (int sign : {1, -1}) {
    const Hamiltonian2D h = figure_system(sign);
    Trajectory t = integrate(h, PhaseState::two_d(1.0, 1.0, 1.0, -3.0), 20.0);
    const auto drift = conservation_report(t, integrals(h));
    EXPECT_LT(drift.at("H"), 1e-8);
    EXPECT_LT(drift.at("K"), 1e-8);
    EXPECT_LT(drift.at("J1"), 1e-6);
    EXPECT_LT(drift.at("J2"), 1e-6);
    const ClosureResult c = closure_detect(t, 1e-5);
    EXPECT_TRUE(c.closed);
    EXPECT_LT(c.distance, 1e-4);
    EXPECT_LT(off_two_pi_multiple(c.period), 1e-3) << c.period;
  }
}

TEST(Dynamics, CommensurateHarmonicCloses) {
  const Hamiltonian2D h = harmonic_system(1.0, 2.0, 2, 1);
  Trajectory t = integrate(h, PhaseState::two_d(1.0, 1.0, 1.0, -3.0), 20.0);
  const ClosureResult c = closure_detect(t, 1e-7);
  EXPECT_TRUE(c.closed);
  EXPECT_NEAR(c.period, 2.0 * kPi, 1e-6);
  EXPECT_LT(c.distance, 1e-6);
  const auto drift = conservation_report(t, integrals(h));
  for (const auto& [name, d] : drift) EXPECT_LT(d, 1e-8) << name;
}

TEST(Dynamics, IncommensurateDoesNotClose) {
  const Hamiltonian2D h = harmonic_system(1.0, std::sqrt(2.0), 1, 1, false);
  Trajectory t = integrate(h, PhaseState::two_d(1.0, 1.0, 1.0, -3.0), 20.0);
  EXPECT_FALSE(closure_detect(t, 1e-5).closed);
}

TEST(Dynamics, DetunedIntegralDrifts) {
  const Hamiltonian2D h = harmonic_system(1.0, 1.1, 1, 1, false);
  Trajectory t = integrate(h, PhaseState::two_d(1.0, 0.5, 0.5, -1.0), 20.0);
  EXPECT_GT(conservation_report(t, integrals(h)).at("J1"), 0.1);
}

TEST(DynamicsProperty, TimeReversal) {
  const Hamiltonian2D h = figure_system(1);
  const IntegrateOptions opt;
  const Trajectory fwd = integrate(h, PhaseState::two_d(1.0, 1.0, 1.0, -3.0), 20.0, opt);
  const PhaseState& e = fwd.states.back();
  const Trajectory back = integrate(h, PhaseState::two_d(e.x(0), -e.p(0), e.x(1), -e.p(1)), 20.0, opt);
  const PhaseState& r = back.states.back();
  const double tol = 100.0 * opt.rel_tol;
  EXPECT_LT(std::abs(r.x(0) - 1.0), tol);
  EXPECT_LT(std::abs(-r.p(0) - 1.0), tol);
  EXPECT_LT(std::abs(r.x(1) - 1.0), tol);
  EXPECT_LT(std::abs(-r.p(1) + 3.0), tol);
}

TEST(DynamicsProperty, LadderPhaseRotatesUniformly) {
  const std::vector<std::pair<PotentialBranch, PhaseState>> cases{
      {harmonic_potential(1.3), PhaseState::one_d(1.0, 0.2)},
      {closed_form_v3(1.0, 1.0, V3Variant::harmonic), PhaseState::one_d(1.0, 0.5)},
      {closed_form_v3(1.0, 1.0, V3Variant::deformed, 1, RadicalBranch::analytic), PhaseState::one_d(1.0, 0.5)},
      {closed_form_v4(1.0, 1.0, V4Variant::rational), PhaseState::one_d(2.0, 0.5)},
      {closed_form_v4(1.0, 4.0, V4Variant::deformed, 1, RadicalBranch::analytic), PhaseState::one_d(1.0, 1.0)},
  };
  for (const auto& [b, s0] : cases) {
    const LadderSystem sys = make_ladder_system(b);
    const Trajectory t = integrate(b, s0, 2.0 * 2.0 * kPi / sys.omega);
    const double m0 = std::abs(sys.pair.lowering(s0));
    double prev = std::arg(sys.pair.lowering(s0)), unwrapped = prev, worst_rate = 0.0, worst_mod = 0.0;
    for (std::size_t i = 1; i < t.states.size(); ++i) {
      const Complex a = sys.pair.lowering(t.states[i]);
      double d = std::arg(a) - prev;
      d -= 2.0 * kPi * std::round(d / (2.0 * kPi));
      prev = std::arg(a);
      unwrapped += d;
      const double rate = d / (t.times[i] - t.times[i - 1]);
      worst_rate = std::max(worst_rate, std::abs(rate + sys.omega));
      worst_mod = std::max(worst_mod, std::abs(std::abs(a) - m0) / m0);
    }
    EXPECT_LT(worst_rate, 1e-5) << b.label();
    EXPECT_LT(worst_mod, 1e-7) << b.label();
    EXPECT_NEAR(unwrapped - std::arg(sys.pair.lowering(s0)), -sys.omega * t.times.back(), 1e-5) << b.label();
  }
}

TEST(Dynamics, DomainExit) {
  const PotentialBranch b = closed_form_v4(1.0, -1.0, V4Variant::deformed, 1, RadicalBranch::analytic);
  try {
    integrate(b, PhaseState::one_d(8.5, -5.0), 20.0);
    FAIL() << "expected DomainExitError";
  } catch (const DomainExitError& e) {
    EXPECT_GT(e.exit_time(), 0.0);
    EXPECT_LT(e.exit_time(), 1.0);
  }
  EXPECT_THROW(integrate(b, PhaseState::one_d(0.5, 0.0), 1.0), std::exception);
}

TEST(Dynamics, StepUnderflowIsStiffness) {
  // V = -1/|x| falls into the singularity at x = 0 in finite time.
  const PotentialBranch coulomb(
      [](double x) { return std::pair{-1.0 / std::abs(x), x / std::pow(std::abs(x), 3.0)}; },
      {Interval::whole_line()}, Provenance::tabulated, "coulomb", {});
  EXPECT_THROW(integrate(coulomb, PhaseState::one_d(1.0, 0.0), 3.0), StiffnessError);
}

TEST(Dynamics, AlgebraicHarmonicTrajectory) {
  const LadderSystem sys = make_ladder_system(harmonic_potential(1.0));
  std::vector<double> grid;
  for (int i = 0; i <= 200; ++i) grid.push_back(2.0 * kPi * i / 200.0);
  const AlgebraicTrajectory at = algebraic_trajectory(sys, PhaseState::one_d(1.0, 0.0), grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_NEAR(at.states[i].x(), std::cos(grid[i]), 1e-9);
    EXPECT_NEAR(at.states[i].p(), -std::sin(grid[i]), 1e-9);
  }
  EXPECT_NEAR(at.modulus, std::sqrt(sys.pha.Q(at.energy)), 1e-12);
}

TEST(Dynamics, AlgebraicMatchesNumeric) {
  const std::vector<std::pair<PotentialBranch, PhaseState>> cases{
      {closed_form_v3(1.0, 1.0, V3Variant::harmonic), PhaseState::one_d(1.0, 0.5)},
      {closed_form_v3(1.5, 1.0, V3Variant::deformed, -1, RadicalBranch::analytic), PhaseState::one_d(1.0, 0.5)},
      {closed_form_v4(1.0, 1.0, V4Variant::rational), PhaseState::one_d(2.0, 0.5)},
      {closed_form_v4(2.0, 16.0, V4Variant::deformed, -1, RadicalBranch::analytic), PhaseState::one_d(1.0, -3.0)},
      {gravel_potential(1.0, 1.0, 1), PhaseState::one_d(1.0, 0.5)},
  };
  for (const auto& [b, s0] : cases) {
    const LadderSystem sys = make_ladder_system(b);
    // Closed-form periods are 1, 2 or 3 times 2 pi / w; three covers every family.
    const double span = 3.0 * 2.0 * kPi / sys.omega;
    const Trajectory num = integrate(b, s0, span);
    std::vector<double> grid;
    for (int i = 0; i <= 300; ++i) grid.push_back(span * i / 300.0);
    const AlgebraicTrajectory at = algebraic_trajectory(sys, s0, grid);
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const PhaseState n = num.state_at(grid[i]);
      worst = std::max({worst, std::abs(n.x() - at.states[i].x()), std::abs(n.p() - at.states[i].p())});
    }
    EXPECT_LT(worst, 1e-6) << b.label();
    EXPECT_LT(at.modulus_deviation, 1e-8) << b.label();
  }
}

TEST(Dynamics, TrajectoryCsvColumns) {
  const Hamiltonian2D h = harmonic_system(1.0, 2.0, 2, 1);
  Trajectory t = integrate(h, PhaseState::two_d(1.0, 1.0, 1.0, -3.0), 1.0);
  conservation_report(t, integrals(h));
  std::ostringstream os;
  write_trajectory_csv(os, t);
  std::istringstream in(os.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "t,x1,p1,x2,p2,H,K,J1,J2");
  EXPECT_EQ(row.substr(0, 10), "0,1,1,1,-3");

  const Trajectory one = integrate(harmonic_potential(1.0), PhaseState::one_d(1.0, 0.0), 1.0);
  std::ostringstream os1;
  write_trajectory_csv(os1, one);
  EXPECT_EQ(os1.str().substr(0, os1.str().find('\n')), "t,x1,p1,H");
}

TEST(Dynamics, SvgOutput) {
  const Hamiltonian2D h = harmonic_system(1.0, 2.0, 2, 1);
  const Trajectory t = integrate(h, PhaseState::two_d(1.0, 1.0, 1.0, -3.0), 2.0 * kPi);
  std::ostringstream a, b;
  write_trajectory_svg(a, t, {"w1 = 1, w2 = 2 <harmonic>"});
  write_trajectory_svg(b, t, {"w1 = 1, w2 = 2 <harmonic>"});
  const std::string s = a.str();
  EXPECT_EQ(s, b.str());
  EXPECT_EQ(s.rfind("<?xml", 0), 0u);
  EXPECT_NE(s.find("viewBox=\"0 0 800 800\""), std::string::npos);
  EXPECT_NE(s.find("<polyline"), std::string::npos);
  EXPECT_NE(s.find("&lt;harmonic&gt;"), std::string::npos);
  EXPECT_NE(s.find("</svg>"), std::string::npos);
}

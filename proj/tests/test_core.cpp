#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ladderlab/ladderlab.hpp"

using namespace ladderlab;

namespace {

// Random polynomial in (x, p) of total degree <= 3, no analytic gradient.
Observable random_poly(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::array<double, 3>> terms;  // coefficient, power of x, power of p
  std::uniform_int_distribution<int> deg(0, 3);
  for (int k = 0; k < 5; ++k) {
    const int a = deg(rng), b = std::uniform_int_distribution<int>(0, 3 - a)(rng);
    terms.push_back({u(rng), static_cast<double>(a), static_cast<double>(b)});
  }
  return Observable(1, [terms](const PhaseState& s) {
    Complex acc{0.0, 0.0};
    for (const auto& t : terms) acc += t[0] * std::pow(s.x(), t[1]) * std::pow(s.p(), t[2]);
    return acc;
  });
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> xs;
  for (std::size_t i = 0; i < n; ++i) xs.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return xs;
}

}  // namespace

// ---- phase_core ----

TEST(PhaseCore, CanonicalBracket) {
  const Observable x = position_observable(), p = momentum_observable();
  for (double a : {-2.0, 0.0, 3.5}) {
    EXPECT_NEAR(std::abs(poisson_bracket(x, p, PhaseState::one_d(a, 0.4)) - 1.0), 0.0, 1e-14);
  }
}

TEST(PhaseCore, SelfBracketVanishes) {
  const Observable h = harmonic_hamiltonian(1.3);
  EXPECT_LT(std::abs(poisson_bracket(h, h, PhaseState::one_d(0.3, -1.2))), 1e-14);
}

TEST(PhaseCore, HarmonicLoweringHandValue) {
  const Observable h = harmonic_hamiltonian(1.0);
  const Observable a = momentum_observable() + Complex(0.0, -1.0) * position_observable();
  const Complex got = poisson_bracket(h, a, PhaseState::one_d(0.7, 0.3));
  const Complex want = kI * Complex(0.3, -0.7);
  EXPECT_LT(std::abs(got - want), 1e-12);
}

TEST(PhaseCore, FiniteDifferenceGradientExamples) {
  const Observable sq(1, [](const PhaseState& s) { return Complex(s.x() * s.x()); });
  const Observable mom(1, [](const PhaseState& s) { return Complex(s.p()); });
  const Observable xp(1, [](const PhaseState& s) { return Complex(s.x() * s.p()); });
  auto near = [](const Gradient& g, double gx, double gp) {
    return std::abs(g[0] - gx) < 1e-9 && std::abs(g[1] - gp) < 1e-9;
  };
  EXPECT_TRUE(near(estimate_gradient(sq, PhaseState::one_d(2.0, 0.0)), 4.0, 0.0));
  EXPECT_TRUE(near(estimate_gradient(mom, PhaseState::one_d(-0.8, 5.0)), 0.0, 1.0));
  EXPECT_TRUE(near(estimate_gradient(xp, PhaseState::one_d(1.5, -2.0)), -2.0, 1.5));
}

TEST(PhaseCore, NonFiniteEvaluationNamesPartial) {
  const Observable bad(1, [](const PhaseState& s) { return Complex(s.x() > 1.0 ? NAN : s.x()); });
  try {
    estimate_gradient(bad, PhaseState::one_d(1.0, 0.0));
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("x1"), std::string::npos) << e.what();
  }
}

TEST(PhaseCore, StateInvariants) {
  const std::array<double, 2> q{1.0, 2.0};
  const std::array<double, 1> m{0.0};
  EXPECT_THROW(PhaseState(q, m), std::invalid_argument);
  EXPECT_ANY_THROW(PhaseState::one_d(NAN, 0.0));
  EXPECT_THROW(poisson_bracket(position_observable(), momentum_observable(), PhaseState::two_d(0, 0, 0, 0)),
               std::invalid_argument);
}

TEST(PhaseCoreProperty, Antisymmetry) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    const Observable f = random_poly(rng), g = random_poly(rng);
    const PhaseState s = PhaseState::one_d(u(rng), u(rng));
    const Complex fg = poisson_bracket(f, g, s), gf = poisson_bracket(g, f, s);
    EXPECT_LT(std::abs(fg + gf), 1e-10 * (1.0 + std::abs(fg)));
  }
}

TEST(PhaseCoreProperty, Leibniz) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    const Observable f = random_poly(rng), g = random_poly(rng), h = random_poly(rng);
    const PhaseState s = PhaseState::one_d(u(rng), u(rng));
    const Complex lhs = poisson_bracket(f, g * h, s);
    const Complex rhs = poisson_bracket(f, g, s) * h(s) + g(s) * poisson_bracket(f, h, s);
    EXPECT_LT(std::abs(lhs - rhs), 1e-7 * (1.0 + std::abs(lhs)));
  }
}

TEST(PhaseCoreProperty, HarmonicLadderBrackets) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-3.0, 3.0), w(0.5, 4.0);
  for (int k = 0; k < 100; ++k) {
    const double omega = w(rng);
    const Observable h = harmonic_hamiltonian(omega);
    const Observable lower = momentum_observable() + Complex(0.0, -omega) * position_observable();
    const Observable raise = momentum_observable() + Complex(0.0, omega) * position_observable();
    const PhaseState s = PhaseState::one_d(u(rng), u(rng));
    EXPECT_LT(std::abs(poisson_bracket(h, lower, s) - kI * omega * lower(s)), 1e-9 * (1.0 + omega * std::abs(lower(s))));
    EXPECT_LT(std::abs(poisson_bracket(h, raise, s) + kI * omega * raise(s)), 1e-9 * (1.0 + omega * std::abs(raise(s))));
  }
}

TEST(PhaseCoreProperty, AnalyticGradientMatchesFiniteDifferences) {
  const PotentialBranch b = closed_form_v4(1.0, 1.0, V4Variant::rational);
  const Observable h = hamiltonian_1d(b);
  ASSERT_TRUE(h.has_gradient());
  std::mt19937_64 rng(14);
  for (double x : random_domain_points(b, 50, rng)) {
    const PhaseState s = PhaseState::one_d(x, 0.7);
    const Gradient a = h.analytic_gradient(s), n = estimate_gradient(h, s);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_LT(std::abs(a[k] - n[k]), 1e-6 * (1.0 + std::abs(a[k]))) << x;
  }
}

// ---- polynomials and roots ----

TEST(Polynomials, ElementarySymmetric) {
  const std::vector<double> r{1.0, 2.0, 3.0};
  const std::vector<double> e = elementary_symmetric(r);
  ASSERT_EQ(e.size(), 4u);
  EXPECT_DOUBLE_EQ(e[1], 6.0);
  EXPECT_DOUBLE_EQ(e[2], 11.0);
  EXPECT_DOUBLE_EQ(e[3], 6.0);
}

TEST(Roots, QuarticExamples) {
  auto a = solve_quartic_real({1.0, 0.0, 0.0, 0.0, -16.0});
  ASSERT_EQ(a.size(), 2u);
  EXPECT_NEAR(a[0].value, -2.0, 1e-12);
  EXPECT_NEAR(a[1].value, 2.0, 1e-12);

  auto b = solve_quartic_real({1.0, -2.0, 1.0, 0.0, 0.0});
  ASSERT_EQ(b.size(), 2u);
  EXPECT_NEAR(b[0].value, 0.0, 1e-12);
  EXPECT_EQ(b[0].multiplicity, 2);
  EXPECT_NEAR(b[1].value, 1.0, 1e-12);
  EXPECT_EQ(b[1].multiplicity, 2);

  EXPECT_THROW(solve_quartic_real({0.0, 1.0, 0.0, 0.0, 1.0}), DegenerateDegreeError);
}

TEST(Roots, EliminantWorkedValues) {
  const SymmetricInvariants inv = SymmetricInvariants::of(RootSet::double_root(1.0, 1.0));
  EXPECT_DOUBLE_EQ(inv.d, 12.0);
  EXPECT_DOUBLE_EQ(inv.c, 64.0);
  const auto roots = expand_multiplicities(solve_quartic_real(quartic_coefficients(1.0, inv, 1.0)));
  EXPECT_TRUE(std::any_of(roots.begin(), roots.end(), [](double v) { return std::abs(v + 1.5) < 1e-12; }));

  // All zero modes zero: the harmonic value w^2 x^2 / 2 is a root.
  const SymmetricInvariants zero{3, 0.0, 0.0, std::nullopt};
  const auto z = expand_multiplicities(solve_quartic_real(quartic_coefficients(1.0, zero, 1.0)));
  EXPECT_TRUE(std::any_of(z.begin(), z.end(), [](double v) { return std::abs(v - 0.5) < 1e-12; }));
}

TEST(Roots, EliminantRoundTrip) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> e(-5.0, 5.0), w(0.5, 4.0), xd(0.2, 3.0);
  int checked = 0;
  for (int k = 0; k < 200; ++k) {
    const double e1 = e(rng), e2 = e(rng), omega = w(rng), x = xd(rng) * (k % 2 ? 1.0 : -1.0);
    const RootSet rs(3, {e1, e2, -e1 - e2}, omega);
    const SymmetricInvariants inv = SymmetricInvariants::of(rs);
    for (const RealRoot& r : solve_quartic_real(quartic_coefficients(omega, inv, x))) {
      const double f0 = order3::f0(omega, x, r.value, 0.0, inv.d);
      EXPECT_LT(order3::reduced_first(omega, inv.d, x, r.value, f0).normalized(), 1e-9);
      // The quartic is the resultant of both relations; the second holds whenever the root is simple.
      if (r.multiplicity == 1) EXPECT_LT(order3::reduced_second(omega, inv.d, inv.c, r.value, f0).normalized(), 1e-9);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(Roots, RootSetValidation) {
  EXPECT_THROW(RootSet(3, {1.0, 1.0, 1.0}, 1.0), std::invalid_argument);
  EXPECT_THROW(RootSet(4, {1.0, -1.0, 0.0}, 1.0), std::invalid_argument);
  EXPECT_THROW(RootSet(3, {1.0, 1.0, -2.0}, 0.0), std::invalid_argument);
  const RootSet rs(3, {1.0, -2.0, 1.0}, 1.0);
  EXPECT_TRUE(std::is_sorted(rs.roots().begin(), rs.roots().end()));
}

TEST(Roots, TripleRootInvariants) {
  const SymmetricInvariants inv = SymmetricInvariants::of(RootSet::triple_root(1.0, 1.0));
  EXPECT_DOUBLE_EQ(inv.d, 6.0);
  EXPECT_DOUBLE_EQ(inv.c, 8.0);
  EXPECT_DOUBLE_EQ(*inv.e, 3.0);
  EXPECT_NEAR(inv.c, 2.0 / 3.0 * std::sqrt(2.0 / 3.0) * std::pow(inv.d, 1.5), 1e-12);
  EXPECT_NEAR(*inv.e, inv.d * inv.d / 12.0, 1e-12);
}

// ---- closed-form potentials ----

TEST(Potentials, ClosedFormWorkedValues) {
  EXPECT_NEAR(closed_form_v3(1.0, 1.0, V3Variant::harmonic).V(1.0), -1.5, 1e-14);
  EXPECT_NEAR(closed_form_v4(1.0, 1.0, V4Variant::rational).V(2.0), 1.5, 1e-14);
  EXPECT_NEAR(closed_form_v4(1.0, 1.0, V4Variant::deformed, 1).V(6.0), 1.5, 1e-14);
  EXPECT_NEAR(closed_form_v4(1.0, 1.0, V4Variant::deformed, 1, RadicalBranch::analytic).V(6.0), 1.5, 1e-14);
}

TEST(Potentials, DegenerateParameters) {
  for (double x : {0.5, 1.0, 2.5}) {
    EXPECT_NEAR(closed_form_v3(1.3, 0.0, V3Variant::deformed, 1).V(x), 1.69 * x * x / 2.0, 1e-12);
    EXPECT_NEAR(closed_form_v3(1.3, 0.0, V3Variant::deformed, -1).V(x), 1.69 * x * x / 18.0, 1e-12);
    EXPECT_NEAR(closed_form_v4(2.0, 0.0, V4Variant::rational).V(x), 4.0 * x * x / 8.0, 1e-12);
    EXPECT_NEAR(gravel_potential(1.0, 0.0, 1).V(x), x * x / 2.0, 1e-12);
  }
  EXPECT_NEAR(gravel_potential(2.0, 3.0, 1).V(0.0), 4.0 * 3.0 / 9.0, 1e-14);
}

TEST(Potentials, DomainErrors) {
  EXPECT_THROW(closed_form_v4(1.0, 1.0, V4Variant::rational).V(0.0), DomainError);
  EXPECT_THROW(gravel_potential(1.0, -1.0, 1).V(0.5), DomainError);
  EXPECT_NO_THROW(gravel_potential(1.0, -1.0, 1).V(1.5));
  const PotentialBranch neg = closed_form_v3(1.0, -1.0, V3Variant::deformed, 1);
  EXPECT_THROW(neg.V(1.0), DomainError);
  EXPECT_NO_THROW(neg.V(5.0));
}

TEST(Potentials, DeformedOrderThreeEqualsGravel) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> e(0.1, 5.0), w(0.5, 4.0), xd(-4.0, 4.0);
  for (int k = 0; k < 20; ++k) {
    const double eps = e(rng), omega = w(rng);
    for (int sign : {1, -1}) {
      const PotentialBranch v3 = closed_form_v3(omega, eps, V3Variant::deformed, sign, RadicalBranch::analytic);
      const PotentialBranch gr = gravel_potential(omega, 18.0 * eps / (omega * omega), sign);
      for (int i = 0; i < 100; ++i) {
        const double x = xd(rng);
        EXPECT_LT(std::abs(v3.V(x) - gr.V(x)), 1e-10 * (1.0 + std::abs(gr.V(x))));
      }
    }
  }
}

TEST(Potentials, DerivativeMatchesFiniteDifferences) {
  const std::vector<PotentialBranch> fams{
      harmonic_potential(1.5),
      closed_form_v3(1.0, 1.0, V3Variant::harmonic),
      closed_form_v3(2.0, 0.7, V3Variant::deformed, -1),
      closed_form_v3(1.0, -1.0, V3Variant::deformed, 1, RadicalBranch::analytic),
      closed_form_v4(1.0, 1.0, V4Variant::rational),
      closed_form_v4(0.5, 2.0, V4Variant::deformed, 1),
      closed_form_v4(1.0, 4.0, V4Variant::deformed, -1, RadicalBranch::analytic),
      gravel_potential(1.0, 1.0, -1),
      second_order_potential(1.0, 0.5),
  };
  std::mt19937_64 rng(32);
  for (const PotentialBranch& b : fams) {
    for (double x : random_domain_points(b, 50, rng)) {
      const double h = 1e-5 * std::max(1.0, std::abs(x));
      if (detail::edge_distance(b, x) < 3.0 * h) continue;
      const double fd = (b.V(x + h) - b.V(x - h)) / (2.0 * h);
      EXPECT_LT(std::abs(fd - b.dV(x)), 1e-6 * (1.0 + std::abs(b.dV(x)))) << b.label() << " x=" << x;
    }
  }
}

TEST(Potentials, TabulatedInterpolation) {
  std::vector<double> xs, vs;
  for (double x : linspace(-3.0, 3.0, 61)) {
    xs.push_back(x);
    vs.push_back(0.5 * x * x);
  }
  const PotentialBranch t = tabulated_potential(xs, vs);
  EXPECT_NEAR(t.V(1.05), 0.5 * 1.05 * 1.05, 1e-6);
  EXPECT_NEAR(t.dV(1.05), 1.05, 1e-4);
  EXPECT_THROW(t.V(3.5), DomainError);
}

TEST(Potentials, BranchCsvFormat) {
  const PotentialBranch b = closed_form_v3(1.0, 1.0, V3Variant::harmonic);
  std::ostringstream os;
  const std::vector<double> xs{1.0, 0.1};
  write_branch_csv(os, b, xs);
  std::istringstream in(os.str());
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_EQ(header, "x,V,dV");
  EXPECT_EQ(row1, "1,-1.5,1");
  // 17 significant digits round-trip the double exactly.
  const double v = std::stod(row2.substr(row2.find(',') + 1));
  EXPECT_EQ(v, b.V(0.1));
}

// ---- continuation ----

namespace {

double max_gap(const PotentialBranch& branch, const PotentialBranch& ref, double skip_near = -1.0,
               double skip_radius = 0.0) {
  double worst = 0.0;
  const auto& nodes = branch.nodes();
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    for (double x : {nodes[i].x, 0.5 * (nodes[i].x + nodes[i + 1].x)}) {
      if (!ref.in_domain(x) || !branch.in_domain(x)) continue;
      if (skip_radius > 0.0 && std::abs(std::abs(x) - skip_near) < skip_radius) continue;
      worst = std::max(worst, std::abs(branch.V(x) - ref.V(x)));
    }
  }
  return worst;
}

// Smallest gap between `branch` and any of the references.
double best_gap(const PotentialBranch& branch, const std::vector<PotentialBranch>& refs, double skip_near = -1.0,
                double skip_radius = 0.0) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : refs) best = std::min(best, max_gap(branch, r, skip_near, skip_radius));
  return best;
}

}  // namespace

TEST(Continuation, DoubleRootBranchesAreClosedForms) {
  const std::vector<double> grid = linspace(-3.0, 3.0, 601);
  const ContinuationResult res = branch_continuation(RootSet::double_root(1.0, 1.0), grid);
  ASSERT_EQ(res.branches.size(), 3u);
  const PotentialBranch harm = closed_form_v3(1.0, 1.0, V3Variant::harmonic);
  const PotentialBranch lower = closed_form_v3(1.0, 1.0, V3Variant::deformed, -1, RadicalBranch::analytic);
  bool has_harm = false, has_lower = false;
  for (const auto& b : res.branches) {
    has_harm = has_harm || max_gap(b, harm) < 1e-9;
    has_lower = has_lower || max_gap(b, lower) < 1e-9;
  }
  EXPECT_TRUE(has_harm);
  EXPECT_TRUE(has_lower);
  EXPECT_LT(res.max_node_residual, 1e-9);
}

TEST(Continuation, NearDoubleRootCollapse) {
  const std::vector<double> grid = linspace(-3.0, 3.0, 601);
  const std::vector<PotentialBranch> refs{
      closed_form_v3(1.0, 1.0, V3Variant::harmonic),
      closed_form_v3(1.0, 1.0, V3Variant::deformed, 1, RadicalBranch::analytic),
      closed_form_v3(1.0, 1.0, V3Variant::deformed, -1, RadicalBranch::analytic)};
  for (double delta : {1e-10, 1e-12}) {
    const ContinuationResult res = branch_continuation(RootSet(3, {1.0 + delta, 1.0 - delta, -2.0}, 1.0), grid);
    ASSERT_FALSE(res.branches.empty());
    for (const auto& b : res.branches) EXPECT_LT(best_gap(b, refs), 1e-8) << b.label();
  }
}

TEST(Continuation, TripleRootBranchesAreClosedForms) {
  const std::vector<double> grid = linspace(-3.0, 3.0, 601);
  const ContinuationResult res = branch_continuation(RootSet::triple_root(1.0, 1.0), grid);
  const std::vector<PotentialBranch> refs{
      closed_form_v4(1.0, 1.0, V4Variant::rational),
      closed_form_v4(1.0, 1.0, V4Variant::deformed, 1, RadicalBranch::analytic),
      closed_form_v4(1.0, 1.0, V4Variant::deformed, -1, RadicalBranch::analytic)};
  ASSERT_FALSE(res.branches.empty());
  // |x| = sqrt(8) is a four-fold contact of the rational and deformed families; the eliminant
  // only resolves V to about eps^(1/4) there.
  for (const auto& b : res.branches) EXPECT_LT(best_gap(b, refs, std::sqrt(8.0), 0.02), 1e-8) << b.label();
}

TEST(Continuation, OrderFourWorkedValue) {
  const std::vector<double> grid = linspace(0.5, 3.0, 251);
  const ContinuationResult res = branch_continuation(RootSet::triple_root(1.0, 1.0), grid);
  bool found = false;
  for (const auto& b : res.branches) {
    if (b.in_domain(2.0) && std::abs(b.V(2.0) - 1.5) < 1e-10) found = true;
  }
  EXPECT_TRUE(found);
}

TEST(ContinuationProperty, RandomRootSets) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> e(-5.0, 5.0), w(0.5, 4.0);
  const std::vector<double> grid = linspace(-3.0, 3.0, 301);
  for (int k = 0; k < 8; ++k) {
    const int order = 3 + k % 2;
    std::vector<double> r;
    double sum = 0.0;
    for (int i = 0; i + 1 < order; ++i) {
      r.push_back(e(rng));
      sum += r.back();
    }
    r.push_back(-sum);
    if (std::abs(r.back()) > 5.0) {
      --k;
      continue;
    }
    const RootSet rs(order, r, w(rng));
    const ContinuationResult res = branch_continuation(rs, grid);
    EXPECT_LT(res.max_node_residual, 1e-9);
    for (const auto& b : res.branches) {
      if (b.nodes().size() < 8) continue;
      std::vector<double> xs;
      for (std::size_t i = 2; i + 2 < b.nodes().size(); i += 7) xs.push_back(b.nodes()[i].x);
      const SampleResiduals ode = ode_residual(order, b, rs.omega(), xs);
      EXPECT_LT(ode.max(), 1e-5) << b.label();
    }
  }
}

TEST(ContinuationProperty, PermutationInvariance) {
  const std::vector<double> grid = linspace(-2.0, 2.0, 201);
  const ContinuationResult a = branch_continuation(RootSet(3, {2.5, -1.0, -1.5}, 1.2), grid);
  const ContinuationResult b = branch_continuation(RootSet(3, {-1.5, 2.5, -1.0}, 1.2), grid);
  ASSERT_EQ(a.branches.size(), b.branches.size());
  for (std::size_t i = 0; i < a.branches.size(); ++i) {
    ASSERT_EQ(a.branches[i].nodes().size(), b.branches[i].nodes().size());
    for (std::size_t j = 0; j < a.branches[i].nodes().size(); ++j) {
      EXPECT_LT(std::abs(a.branches[i].nodes()[j].v - b.branches[i].nodes()[j].v), 1e-10);
    }
  }
}

TEST(ContinuationProperty, HarmonicSolutionNeverEmitted) {
  const std::vector<double> grid = linspace(-2.0, 2.0, 201);
  for (const RootSet& rs : {RootSet::triple_root(1.0, 1.0), RootSet(4, {-2.0, -0.5, 1.0, 1.5}, 0.8)}) {
    const ContinuationResult res = branch_continuation(rs, grid);
    for (const auto& b : res.branches) {
      // V'' = w^2 would make V' - w^2 x constant along the branch.
      double lo = 1e300, hi = -1e300;
      for (const auto& n : b.nodes()) {
        lo = std::min(lo, n.dv - rs.omega() * rs.omega() * n.x);
        hi = std::max(hi, n.dv - rs.omega() * rs.omega() * n.x);
      }
      if (b.nodes().size() > 10) EXPECT_GT(hi - lo, 1e-6) << b.label();
    }
  }
}

TEST(Continuation, RejectsBadGrid) {
  const std::vector<double> one{0.0};
  EXPECT_THROW(branch_continuation(RootSet::double_root(1.0, 1.0), one), std::invalid_argument);
}

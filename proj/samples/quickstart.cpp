// Builds the order-3 double-root continuation branch, checks it, composes two order-4
// deformed axes and integrates one orbit.
#include <iostream>

#include "ladderlab/ladderlab.hpp"

int main() {
  using namespace ladderlab;

  const RootSet rs = RootSet::double_root(1.0, 1.0);
  std::vector<double> grid;
  for (int i = 0; i <= 600; ++i) grid.push_back(-3.0 + 0.01 * i);
  const ContinuationResult cont = branch_continuation(rs, grid);
  std::cout << cont.branches.size() << " branches for roots (1, 1, -2)\n";
  for (const PotentialBranch& b : cont.branches) {
    const LadderSystem sys = make_ladder_system(b);
    const VerificationReport rep = verify_system(sys);
    std::cout << "  " << b.label() << ": " << (rep.pass() ? "PASS" : "FAIL") << "\n";
  }

  const LadderSystem a1 = make_ladder_system(closed_form_v4(1.0, 4.0, V4Variant::deformed, 1, RadicalBranch::analytic));
  const LadderSystem a2 = make_ladder_system(closed_form_v4(2.0, 16.0, V4Variant::deformed, 1, RadicalBranch::analytic));
  const Hamiltonian2D h = compose(a1, a2);
  Trajectory tr = integrate(h, PhaseState::two_d(1.0, 1.0, 1.0, -3.0), 20.0);
  const auto drift = conservation_report(tr, integrals(h));
  const ClosureResult cl = closure_detect(tr, 1e-5);
  std::cout << "m1 = " << h.m1() << ", m2 = " << h.m2() << "\n";
  for (const auto& [name, d] : drift) std::cout << "  drift " << name << " = " << d << "\n";
  std::cout << "  period " << cl.period << ", closure distance " << cl.distance << "\n";
  return cl.closed ? 0 : 1;
}

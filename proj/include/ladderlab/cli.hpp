#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ladderlab/dynamics.hpp"
#include "ladderlab/errors.hpp"
#include "ladderlab/ladder.hpp"
#include "ladderlab/potentials.hpp"
#include "ladderlab/run_config.hpp"
#include "ladderlab/superint.hpp"
#include "ladderlab/svg.hpp"
#include "ladderlab/verify.hpp"

namespace ladderlab {

enum ExitCode : int { kExitOk = 0, kExitVerificationFailed = 1, kExitUsage = 2, kExitNumerical = 3 };

/// Runs a command, mapping exceptions to exit codes with a one-line diagnostic on `err`.
inline int run_command(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ResonanceError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InconsistentInputError& e) {
    err << "verification failed: " << e.what() << "\n";
    return kExitVerificationFailed;
  } catch (const NotALadderError& e) {
    err << "verification failed: " << e.what() << "\n";
    return kExitVerificationFailed;
  } catch (const AlgebraMismatchError& e) {
    err << "verification failed: " << e.what() << "\n";
    return kExitVerificationFailed;
  } catch (const SignResolutionError& e) {
    err << "verification failed: " << e.what() << "\n";
    return kExitVerificationFailed;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

namespace detail {

inline constexpr std::size_t kDefaultGridSamples = 801;
inline constexpr std::size_t kDefaultTrajectorySamples = 2000;
inline constexpr double kClosureTolerance = 1e-5;

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  std::vector<double> xs;
  for (std::size_t i = 0; i < n; ++i) xs.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return xs;
}

/// x,V[,dV] samples with an optional header line.
inline PotentialBranch read_table(const std::string& path, const std::string& key) {
  std::ifstream in(path);
  if (!in) throw UsageError(key, "cannot open '" + path + "'");
  std::vector<double> xs, vs;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string a, b;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    try {
      std::size_t ua = 0, ub = 0;
      const double x = std::stod(trim(a), &ua), v = std::stod(trim(b), &ub);
      xs.push_back(x);
      vs.push_back(v);
    } catch (const std::exception&) {
      if (xs.empty()) continue;  // header
      throw UsageError(key, "unreadable row '" + line + "' in '" + path + "'");
    }
  }
  try {
    return tabulated_potential(std::move(xs), std::move(vs), std::filesystem::path(path).filename().string());
  } catch (const std::invalid_argument& e) {
    throw UsageError(key, e.what());
  }
}

inline std::string axis_prefix(int axis) { return axis == 0 ? "" : "axis2-"; }

/// Every branch the axis selector describes (continuation can give several).
inline std::vector<PotentialBranch> build_branches(const AxisConfig& a, const RunConfig& c, int axis = 0) {
  const RadicalBranch radical = a.radical == "absolute" ? RadicalBranch::absolute : RadicalBranch::analytic;
  if (!a.table.empty()) return {read_table(a.table, axis_prefix(axis) + "table")};
  if (a.variant == "continuation") {
    const RootSet rs(*a.order, a.roots, a.omega);
    const std::vector<double> grid = uniform_grid(c.x_lo, c.x_hi, c.samples.value_or(kDefaultGridSamples));
    ContinuationResult res = branch_continuation(rs, grid);
    if (res.branches.empty()) throw ContinuationError("no real branch of the eliminant on the x-range", c.x_lo);
    return res.branches;
  }
  switch (*a.order) {
    case 1: return {harmonic_potential(a.omega)};
    case 2: return {second_order_potential(a.omega, *a.b)};
    case 3:
      if (a.variant == "gravel") return {gravel_potential(a.omega, *a.b, a.sign)};
      return {closed_form_v3(a.omega, *a.eps2, a.variant == "harmonic" ? V3Variant::harmonic : V3Variant::deformed,
                             a.sign, radical)};
    default:
      return {closed_form_v4(a.omega, *a.eps2, a.variant == "rational" ? V4Variant::rational : V4Variant::deformed,
                             a.sign, radical)};
  }
}

inline PotentialBranch select_branch(const AxisConfig& a, const RunConfig& c, int axis) {
  std::vector<PotentialBranch> all = build_branches(a, c, axis);
  if (a.branch >= all.size()) {
    throw UsageError(axis_prefix(axis) + "branch",
                     "index " + std::to_string(a.branch) + " but only " + std::to_string(all.size()) + " branch(es)");
  }
  return all[a.branch];
}

/// The ladder system for a branch. Tabulated potentials take the claimed order, frequency
/// and zero modes (roots, or eps2 for the double/triple-root sets) from the selector.
inline LadderSystem ladder_system_for(const AxisConfig& a, const PotentialBranch& branch, bool validate, int axis = 0) {
  if (branch.provenance() != Provenance::tabulated) return make_ladder_system(branch, std::nullopt, validate);
  const int order = *a.order;
  if (order == 1) {
    return {branch, 1, a.omega, std::nullopt, build_ladder1(a.omega), pha_polynomials_harmonic(a.omega),
            hamiltonian_1d(branch)};
  }
  if (order != 3 && order != 4) throw UsageError(axis_prefix(axis) + "order", "ladder pairs exist for orders 1, 3, 4");
  std::optional<RootSet> rs;
  if (!a.roots.empty()) {
    rs = RootSet(order, a.roots, a.omega);
  } else if (a.eps2) {
    rs = order == 3 ? RootSet::double_root(*a.eps2, a.omega) : RootSet::triple_root(*a.eps2, a.omega);
  } else {
    throw UsageError(axis_prefix(axis) + "roots", "a tabulated potential needs roots or eps2 for order 3/4");
  }
  return make_ladder_system(branch, rs, validate);
}

inline std::filesystem::path output_path(const RunConfig& c, const std::string& stem, const std::string& ext) {
  std::filesystem::create_directories(c.out_dir);
  return std::filesystem::path(c.out_dir) / (stem + ext);
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw UsageError("out", "cannot write '" + p.string() + "'");
  return os;
}

inline std::string domain_string(const PotentialBranch& b) {
  std::string s;
  char buf[96];
  for (const Interval& iv : b.domain()) {
    std::snprintf(buf, sizeof buf, "%s%c%.10g;%.10g%c", s.empty() ? "" : " U ", iv.lo_closed ? '[' : '(', iv.lo, iv.hi,
                  iv.hi_closed ? ']' : ')');
    s += buf;
  }
  return s;
}

inline std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

/// One `x,V,dV` CSV per branch plus `<name>_summary.csv` (label, provenance, domain).
inline int cmd_solve_potential(const RunConfig& c, std::ostream& log) {
  const std::vector<PotentialBranch> branches = detail::build_branches(c.axis1, c);
  const std::string stem = c.name.empty() ? "potential" : c.name;
  std::ofstream summary = detail::open_output(detail::output_path(c, stem + "_summary", ".csv"));
  summary << "branch,label,provenance,domain,points,file\n";
  const std::size_t n = c.samples.value_or(detail::kDefaultGridSamples);
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const PotentialBranch& b = branches[i];
    const auto path = detail::output_path(c, stem + "_branch" + std::to_string(i), ".csv");
    std::ofstream os = detail::open_output(path);
    const std::vector<double> xs = export_grid(b, c.x_lo, c.x_hi, n);
    std::size_t written = 0;
    for (double x : xs) written += b.in_domain(x) ? 1 : 0;
    write_branch_csv(os, b, xs);
    summary << i << ",\"" << b.label() << "\"," << to_string(b.provenance()) << ",\"" << detail::domain_string(b)
            << "\"," << written << "," << path.filename().string() << "\n";
    log << "branch " << i << ": " << b.label() << " [" << to_string(b.provenance()) << "] domain "
        << detail::domain_string(b) << " -> " << path.string() << "\n";
  }
  return kExitOk;
}

/// Verification report (text and CSV) for every selected branch; exit 1 if any fails.
inline int cmd_verify(const RunConfig& c, std::ostream& log) {
  VerifyOptions opt;
  opt.states = c.verify_states;
  opt.seed = c.seed;
  const std::string stem = c.name.empty() ? "verify" : c.name;
  bool all_pass = true;
  std::vector<std::pair<const AxisConfig*, int>> axes{{&c.axis1, 0}};
  if (c.axis2) axes.emplace_back(&*c.axis2, 1);
  for (const auto& [axis_cfg, axis] : axes) {
    const std::vector<PotentialBranch> branches = detail::build_branches(*axis_cfg, c, axis);
    for (std::size_t i = 0; i < branches.size(); ++i) {
      const LadderSystem sys = detail::ladder_system_for(*axis_cfg, branches[i], false, axis);
      const VerificationReport rep = verify_system(sys, opt);
      std::string tag = stem;
      if (axes.size() > 1) tag += axis == 0 ? "_axis1" : "_axis2";
      if (branches.size() > 1) tag += "_branch" + std::to_string(i);
      std::ofstream csv = detail::open_output(detail::output_path(c, tag + "_report", ".csv"));
      rep.write_csv(csv);
      std::ofstream txt = detail::open_output(detail::output_path(c, tag + "_report", ".txt"));
      rep.write_text(txt);
      rep.write_text(log);
      all_pass = all_pass && rep.pass();
    }
  }
  return all_pass ? kExitOk : kExitVerificationFailed;
}

struct SimulationSummary {
  std::map<std::string, double> drift;
  ClosureResult closure;
  bool closure_evaluated = false;
  std::string csv_path, svg_path, sidecar_path;
};

namespace detail {

inline SimulationSummary finish_simulation(Trajectory& tr, const RunConfig& c, const std::string& stem,
                                           const std::vector<std::string>& annotation, double omega_min,
                                           std::ostream& log) {
  SimulationSummary out;
  out.drift = tr.drift;
  if (c.t_end >= 2.0 * 2.0 * M_PI / omega_min) {
    out.closure = closure_detect(tr, kClosureTolerance);
    out.closure_evaluated = true;
  }
  const auto csv = output_path(c, stem, ".csv"), svg = output_path(c, stem, ".svg"), txt = output_path(c, stem, ".txt");
  {
    std::ofstream os = open_output(csv);
    write_trajectory_csv(os, tr);
  }
  {
    std::ofstream os = open_output(svg);
    write_trajectory_svg(os, tr, annotation);
  }
  std::ostringstream side;
  for (const auto& line : annotation) side << line << "\n";
  char buf[160];
  for (const auto& [name, d] : tr.drift) {
    std::snprintf(buf, sizeof buf, "drift %s = %.3e\n", name.c_str(), d);
    side << buf;
  }
  if (out.closure_evaluated) {
    std::snprintf(buf, sizeof buf, "closed = %s\nperiod = %.12g\nclosure_distance = %.3e\n",
                  out.closure.closed ? "yes" : "no", out.closure.period, out.closure.distance);
    side << buf;
  } else {
    side << "closure not evaluated (t-end shorter than two periods of the slowest axis)\n";
  }
  {
    std::ofstream os = open_output(txt);
    os << side.str();
  }
  log << side.str();
  out.csv_path = csv.string();
  out.svg_path = svg.string();
  out.sidecar_path = txt.string();
  return out;
}

inline std::string axis_description(const AxisConfig& a, const PotentialBranch& b) {
  std::string s = b.label() + ", w=" + g6(a.omega);
  if (a.eps2) s += ", eps2=" + g6(*a.eps2);
  return s;
}

}  // namespace detail

/// Integrates the configured 1D or composed 2D system from `state` and writes the
/// trajectory CSV, an SVG of the (x1, x2) curve (x-p for 1D) and a text sidecar with
/// drifts and closure.
inline SimulationSummary simulate(const RunConfig& c, std::ostream& log, std::vector<std::string> annotation = {}) {
  if (c.state.empty()) throw UsageError("state", "missing initial state");
  IntegrateOptions io;
  io.rel_tol = c.rel_tol;
  io.samples = c.samples.value_or(detail::kDefaultTrajectorySamples);
  const std::string stem = c.name.empty() ? "trajectory" : c.name;
  const PotentialBranch b1 = detail::select_branch(c.axis1, c, 0);
  char buf[160];
  if (!c.axis2) {
    const LadderSystem sys = detail::ladder_system_for(c.axis1, b1, true, 0);
    if (!verify_system(sys).pass()) throw InconsistentInputError("simulate: '" + b1.label() + "' fails verification");
    Trajectory tr = integrate(b1, PhaseState::one_d(c.state[0], c.state[1]), c.t_end, io);
    annotation.push_back(detail::axis_description(c.axis1, b1));
    std::snprintf(buf, sizeof buf, "s0=(%.6g, %.6g), t=[0, %.6g], rel_tol=%.1e", c.state[0], c.state[1], c.t_end,
                  c.rel_tol);
    annotation.emplace_back(buf);
    return detail::finish_simulation(tr, c, stem, annotation, sys.omega, log);
  }
  const PotentialBranch b2 = detail::select_branch(*c.axis2, c, 1);
  LadderSystem s1 = detail::ladder_system_for(c.axis1, b1, true, 0);
  LadderSystem s2 = detail::ladder_system_for(*c.axis2, b2, true, 1);
  const double omega_min = std::min(s1.omega, s2.omega);
  const Hamiltonian2D h = c.m1 ? compose(std::move(s1), std::move(s2), *c.m1, *c.m2) : compose(std::move(s1), std::move(s2));
  Trajectory tr = integrate(h, PhaseState::two_d(c.state[0], c.state[1], c.state[2], c.state[3]), c.t_end, io);
  conservation_report(tr, integrals(h));
  annotation.push_back("axis 1: " + detail::axis_description(c.axis1, b1));
  annotation.push_back("axis 2: " + detail::axis_description(*c.axis2, b2));
  std::snprintf(buf, sizeof buf, "m1=%d, m2=%d, s0=(%.6g, %.6g, %.6g, %.6g), t=[0, %.6g], rel_tol=%.1e", h.m1(), h.m2(),
                c.state[0], c.state[1], c.state[2], c.state[3], c.t_end, c.rel_tol);
  annotation.emplace_back(buf);
  return detail::finish_simulation(tr, c, stem, annotation, omega_min, log);
}

inline int cmd_simulate(const RunConfig& c, std::ostream& log) {
  simulate(c, log);
  return kExitOk;
}

/// The figure parameter set: order-4 deformed family on both axes, w1 = 1, w2 = 2,
/// eps2 = 4 and 16, s0 = (1, 1, 1, -3), t in [0, 20]; sign +1 and -1 of the radical.
inline RunConfig figure_config(int sign, const std::string& out_dir) {
  KeyValues kv{{"order", "4"},       {"variant", "deformed"},       {"eps2", "4"},        {"omega", "1"},
               {"sign", std::to_string(sign)},
               {"axis2-order", "4"}, {"axis2-variant", "deformed"}, {"axis2-eps2", "16"}, {"axis2-omega", "2"},
               {"axis2-sign", std::to_string(sign)},
               {"m1", "2"},          {"m2", "1"},                   {"state", "1,1,1,-3"}, {"t-end", "20"},
               {"rel-tol", "1e-10"}, {"out", out_dir},              {"name", sign > 0 ? "fig1" : "fig2"}};
  return parse_run_config(kv);
}

/// fig1 (sign +1) and fig2 (sign -1): SVG, CSV and sidecar text for each.
inline int cmd_reproduce_figures(const std::string& out_dir, std::ostream& log) {
  for (int sign : {1, -1}) {
    const RunConfig c = figure_config(sign, out_dir);
    const SimulationSummary s =
        simulate(c, log, {sign > 0 ? "fig1: radical sign +1 (lower deformed branch on both axes)"
                                   : "fig2: radical sign -1 (upper deformed branch on both axes)"});
    if (!s.closure.closed) log << (sign > 0 ? "fig1" : "fig2") << ": trajectory did not close within tolerance\n";
  }
  return kExitOk;
}

}  // namespace ladderlab

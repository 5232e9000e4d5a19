#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "ladderlab/cli.hpp"

namespace {

const char* help_for(const std::string& key) {
  static const std::map<std::string, const char*> help{
      {"order", "ladder order of the family (1, 2, 3, 4)"},
      {"variant", "harmonic | deformed | gravel (order 3), rational | deformed (order 4)"},
      {"roots", "comma-separated zero-mode energies (sum 0); selects branch continuation"},
      {"eps2", "zero-mode parameter of the closed-form families"},
      {"sign", "sign in front of the radical (+1 or -1)"},
      {"omega", "frequency"},
      {"radical", "analytic (x sqrt) or absolute (|x| sqrt) reading of the radical"},
      {"b", "parameter of the gravel and second-order families"},
      {"table", "CSV file of x,V samples (tabulated potential)"},
      {"branch", "continuation branch index for verify/simulate"},
      {"m1", "resonance integer of axis 1"},
      {"m2", "resonance integer of axis 2"},
      {"state", "initial state x1,p1[,x2,p2]"},
      {"t-end", "integration time"},
      {"rel-tol", "integrator relative tolerance"},
      {"samples", "grid points (solve-potential) or trajectory samples (simulate)"},
      {"x-range", "lo:hi for grids and continuation"},
      {"states", "random phase states per verification"},
      {"seed", "random seed for verification samples"},
      {"out", "output directory"},
      {"name", "output file stem"},
  };
  const std::string base = key.rfind("axis2-", 0) == 0 ? key.substr(6) : key;
  auto it = help.find(base);
  return it == help.end() ? "" : it->second;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace ladderlab;
  CLI::App app{"ladderlab: classical higher-order ladder operators and superintegrable systems"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "plain-text key = value file; flags override it");
  std::map<std::string, std::string> flag_values;
  for (const std::string& key : run_config_keys()) {
    std::string h = help_for(key);
    if (key.rfind("axis2-", 0) == 0) h = "axis 2: " + h;
    app.add_option("--" + key, flag_values[key], h);
  }

  CLI::App* solve = app.add_subcommand("solve-potential", "export potential branches as x,V,dV CSV");
  CLI::App* verify = app.add_subcommand("verify", "run the residual suite; exit 1 on failure");
  CLI::App* simulate = app.add_subcommand("simulate", "integrate a 1D or composed 2D system; CSV, SVG, sidecar");
  CLI::App* figures = app.add_subcommand("reproduce-figures", "write fig1/fig2 for the figure parameter set");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  return run_command(
      [&]() -> int {
        KeyValues kv;
        if (!config_path.empty()) kv = read_config_file(config_path);
        for (const std::string& key : run_config_keys()) {
          if (app.get_option("--" + key)->count() > 0) kv[key] = flag_values[key];
        }
        if (figures->parsed()) return cmd_reproduce_figures(kv.count("out") ? kv["out"] : ".", std::cout);
        const RunConfig cfg = parse_run_config(kv);
        if (solve->parsed()) return cmd_solve_potential(cfg, std::cout);
        if (verify->parsed()) return cmd_verify(cfg, std::cout);
        if (simulate->parsed()) return cmd_simulate(cfg, std::cout);
        return kExitUsage;
      },
      std::cerr);
}

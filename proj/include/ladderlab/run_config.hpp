#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ladderlab/errors.hpp"

namespace ladderlab {

/// Raw `key = value` settings, from a config file and/or command flags.
using KeyValues = std::map<std::string, std::string>;

/// Per-axis family selector. Keys: order, variant, roots, eps2, sign, omega, radical, b,
/// table, branch; axis 2 uses the same names with an `axis2-` prefix.
struct AxisConfig {
  std::optional<int> order;
  std::string variant;
  std::vector<double> roots;
  std::optional<double> eps2;
  int sign = 1;
  double omega = 1.0;
  /// "analytic" (x sqrt(...), smooth through x = 0) or "absolute" (|x| sqrt(...)).
  std::string radical = "analytic";
  std::optional<double> b;
  std::string table;
  /// Which continuation branch to use for verify/simulate.
  std::size_t branch = 0;
};

struct RunConfig {
  AxisConfig axis1;
  std::optional<AxisConfig> axis2;
  std::optional<int> m1, m2;
  /// x1, p1[, x2, p2].
  std::vector<double> state;
  double t_end = 20.0;
  double rel_tol = 1e-10;
  std::optional<std::size_t> samples;
  double x_lo = -4.0, x_hi = 4.0;
  std::size_t verify_states = 100;
  std::uint64_t seed = 20240607;
  std::string out_dir = ".";
  std::string name;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    if (!std::isfinite(d)) throw std::invalid_argument("not finite");
    return d;
  } catch (const std::exception&) {
    throw UsageError(key, "expected a finite number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return i;
  } catch (const std::exception&) {
    throw UsageError(key, "expected an integer, got '" + v + "'");
  }
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw UsageError(key, "expected a comma-separated list of numbers");
  return out;
}

inline const std::set<std::string>& axis_keys() {
  static const std::set<std::string> keys{"order", "variant", "roots", "eps2",  "sign",
                                          "omega", "radical", "b",     "table", "branch"};
  return keys;
}

inline AxisConfig parse_axis(const KeyValues& kv, const std::string& prefix) {
  AxisConfig a;
  auto get = [&](const std::string& k) -> const std::string* {
    auto it = kv.find(prefix + k);
    return it == kv.end() ? nullptr : &it->second;
  };
  const std::string p = prefix;
  if (auto v = get("order")) {
    const long long o = parse_int(p + "order", *v);
    if (o < 1 || o > 4) throw UsageError(p + "order", "must be 1, 2, 3 or 4");
    a.order = static_cast<int>(o);
  }
  if (auto v = get("variant")) a.variant = *v;
  if (auto v = get("roots")) {
    a.roots = parse_list(p + "roots", *v);
    if (a.roots.size() != 3 && a.roots.size() != 4) throw UsageError(p + "roots", "expected 3 or 4 zero-mode energies");
    double sum = 0.0, scale = 0.0;
    for (double r : a.roots) {
      sum += r;
      scale += std::abs(r);
    }
    if (std::abs(sum) > 1e-12 * std::max(1.0, scale)) throw UsageError(p + "roots", "zero-mode energies must sum to 0");
    if (a.order && *a.order != static_cast<int>(a.roots.size())) {
      throw UsageError(p + "roots", "count does not match order " + std::to_string(*a.order));
    }
    a.order = static_cast<int>(a.roots.size());
    if (!a.variant.empty() && a.variant != "continuation") {
      throw UsageError(p + "variant", "roots select the continuation family; variant must be omitted");
    }
    a.variant = "continuation";
  }
  if (auto v = get("eps2")) a.eps2 = parse_double(p + "eps2", *v);
  if (auto v = get("sign")) {
    const long long s = parse_int(p + "sign", *v);
    if (s != 1 && s != -1) throw UsageError(p + "sign", "must be +1 or -1");
    a.sign = static_cast<int>(s);
  }
  if (auto v = get("omega")) {
    a.omega = parse_double(p + "omega", *v);
    if (!(a.omega > 0.0)) throw UsageError(p + "omega", "must be positive");
  }
  if (auto v = get("radical")) {
    if (*v != "analytic" && *v != "absolute") throw UsageError(p + "radical", "must be 'analytic' or 'absolute'");
    a.radical = *v;
  }
  if (auto v = get("b")) a.b = parse_double(p + "b", *v);
  if (auto v = get("table")) {
    if (v->empty()) throw UsageError(p + "table", "empty path");
    a.table = *v;
  }
  if (auto v = get("branch")) {
    const long long b = parse_int(p + "branch", *v);
    if (b < 0) throw UsageError(p + "branch", "must be non-negative");
    a.branch = static_cast<std::size_t>(b);
  }

  if (!a.table.empty()) {
    if (!a.order) throw UsageError(p + "order", "required with a tabulated potential (the claimed ladder order)");
  } else if (a.variant != "continuation") {
    if (!a.order) throw UsageError(p + "order", "missing");
    static const std::map<int, std::set<std::string>> allowed{{1, {"", "harmonic"}},
                                                              {2, {"", "second-order"}},
                                                              {3, {"harmonic", "deformed", "gravel"}},
                                                              {4, {"rational", "deformed"}}};
    const auto& ok = allowed.at(*a.order);
    if (!ok.count(a.variant)) {
      std::string list;
      for (const auto& s : ok) list += (list.empty() ? "" : ", ") + (s.empty() ? std::string("(none)") : s);
      throw UsageError(p + "variant", "'" + a.variant + "' is not an order-" + std::to_string(*a.order) +
                                          " variant (expected " + list + ")");
    }
    const bool needs_eps = (*a.order == 3 && a.variant != "gravel") || *a.order == 4;
    if (needs_eps && !a.eps2) throw UsageError(p + "eps2", "required for this family");
    if ((a.variant == "gravel" || *a.order == 2) && !a.b) throw UsageError(p + "b", "required for this family");
  }
  return a;
}

}  // namespace detail

/// All recognized keys (flags use the same names with a leading `--`).
inline std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& k : detail::axis_keys()) {
    keys.push_back(k);
    keys.push_back("axis2-" + k);
  }
  for (const char* k : {"m1", "m2", "state", "t-end", "rel-tol", "samples", "x-range", "states", "seed", "out", "name"}) {
    keys.emplace_back(k);
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

/// Plain-text `key = value` lines; `#` starts a comment. Later lines override earlier ones.
inline KeyValues read_config(std::istream& is) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config", "line " + std::to_string(lineno) + " is not of the form key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw UsageError("config", "line " + std::to_string(lineno) + " has an empty key");
    kv[key] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config", "cannot open '" + path + "'");
  return read_config(in);
}

/// Validates every key and value; failures name the offending key.
inline RunConfig parse_run_config(const KeyValues& kv) {
  const std::vector<std::string> known = run_config_keys();
  for (const auto& [k, v] : kv) {
    if (!std::binary_search(known.begin(), known.end(), k)) throw UsageError(k, "unknown key");
  }
  RunConfig c;
  c.axis1 = detail::parse_axis(kv, "");
  const bool has_axis2 = std::any_of(kv.begin(), kv.end(), [](const auto& e) { return e.first.rfind("axis2-", 0) == 0; });
  if (has_axis2) c.axis2 = detail::parse_axis(kv, "axis2-");
  auto get = [&](const char* k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  for (const char* k : {"m1", "m2"}) {
    if (auto v = get(k)) {
      const long long m = detail::parse_int(k, *v);
      if (m < 1) throw UsageError(k, "must be a positive integer");
      (std::string(k) == "m1" ? c.m1 : c.m2) = static_cast<int>(m);
    }
  }
  if (c.m1.has_value() != c.m2.has_value()) throw UsageError(c.m1 ? "m2" : "m1", "m1 and m2 must be given together");
  if (auto v = get("state")) {
    c.state = detail::parse_list("state", *v);
    if (c.state.size() != 2 && c.state.size() != 4) throw UsageError("state", "expected x1,p1 or x1,p1,x2,p2");
    if (c.state.size() == 4 && !c.axis2) throw UsageError("state", "a 2D state needs axis2-* family keys");
    if (c.state.size() == 2 && c.axis2) throw UsageError("state", "axis2-* keys given but the state is 1D");
  }
  if (auto v = get("t-end")) {
    c.t_end = detail::parse_double("t-end", *v);
    if (!(c.t_end > 0.0)) throw UsageError("t-end", "must be positive");
  }
  if (auto v = get("rel-tol")) {
    c.rel_tol = detail::parse_double("rel-tol", *v);
    if (!(c.rel_tol > 0.0 && c.rel_tol <= 1e-3)) throw UsageError("rel-tol", "must be in (0, 1e-3]");
  }
  if (auto v = get("samples")) {
    const long long n = detail::parse_int("samples", *v);
    if (n < 2) throw UsageError("samples", "must be at least 2");
    c.samples = static_cast<std::size_t>(n);
  }
  if (auto v = get("x-range")) {
    const auto colon = v->find(':');
    if (colon == std::string::npos) throw UsageError("x-range", "expected lo:hi");
    c.x_lo = detail::parse_double("x-range", detail::trim(v->substr(0, colon)));
    c.x_hi = detail::parse_double("x-range", detail::trim(v->substr(colon + 1)));
    if (!(c.x_hi > c.x_lo)) throw UsageError("x-range", "empty range (need lo < hi)");
  }
  if (auto v = get("states")) {
    const long long n = detail::parse_int("states", *v);
    if (n < 1) throw UsageError("states", "must be positive");
    c.verify_states = static_cast<std::size_t>(n);
  }
  if (auto v = get("seed")) {
    const long long s = detail::parse_int("seed", *v);
    if (s < 0) throw UsageError("seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (auto v = get("out")) {
    if (v->empty()) throw UsageError("out", "empty path");
    c.out_dir = *v;
  }
  if (auto v = get("name")) {
    if (v->empty() || v->find('/') != std::string::npos) throw UsageError("name", "must be a plain file stem");
    c.name = *v;
  }
  return c;
}

}  // namespace ladderlab

#pragma once

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lestab/error.hpp"
#include "lestab/initial_data.hpp"
#include "lestab/integrator.hpp"

namespace lestab::harness {

/// Every input of a run; the run is fully determined by these values.
struct RunConfig {
  double gamma = 1.5;
  double total_mass = 1.0;
  double lambda1 = 0.5;
  double lambda2 = 1.0 / 3.0;
  int N = 400;
  double tol = 1e-10;
  PerturbationSpec perturbation{PerturbationFamily::radial_dilation, 0.01};
  StepPolicy policy{StepMode::imex_cn, 0.0, 0.9, 200.0};
  double sample_interval = 0.5;
  double theta = 0.05;
  double slack = 0.05;
  double fit_t_a = -1.0;  // negative selects max(t_end / 4, 5)
  double fit_t_b = -1.0;  // negative selects t_end
  std::vector<double> alpha_list;
  double delta = 0.5;
  std::string output_dir = "out";
  bool allow_edge = false;
  int workers = 0;  // 0 selects LESTAB_WORKERS or the hardware concurrency

  double t_end() const { return policy.t_end; }
  double window_lo() const { return fit_t_a >= 0.0 ? fit_t_a : std::max(0.25 * policy.t_end, 5.0); }
  double window_hi() const { return fit_t_b >= 0.0 ? fit_t_b : policy.t_end; }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw Error(ErrorKind::config, key + ": '" + v + "' is not a real number");
  }
  return x;
}

inline long parse_long(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw Error(ErrorKind::config, key + ": '" + v + "' is not an integer");
  }
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorKind::config, key + ": '" + v + "' is not a boolean");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = trim(item);
    if (!t.empty()) out.push_back(parse_double(key, t));
  }
  return out;
}

struct KeyInfo {
  std::string description;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

}  // namespace detail

/// The documented key table; iteration order is alphabetical.
inline const std::map<std::string, detail::KeyInfo>& config_keys() {
  using detail::KeyInfo;
  using detail::parse_double;
  using nlohmann::json;
  static const std::map<std::string, KeyInfo> keys = [] {
    std::map<std::string, KeyInfo> k;
    auto real = [&k](const std::string& name, std::string desc, auto getter) {
      k[name] = KeyInfo{std::move(desc),
                        [name, getter](RunConfig& c, const std::string& v) { getter(c) = parse_double(name, v); },
                        [getter](const RunConfig& c) { return json(getter(const_cast<RunConfig&>(c))); }};
    };
    real("gamma", "adiabatic exponent", [](RunConfig& c) -> double& { return c.gamma; });
    real("total_mass", "total mass M", [](RunConfig& c) -> double& { return c.total_mass; });
    real("lambda1", "shear viscosity", [](RunConfig& c) -> double& { return c.lambda1; });
    real("lambda2", "bulk viscosity", [](RunConfig& c) -> double& { return c.lambda2; });
    real("tol", "Lane-Emden solver tolerance", [](RunConfig& c) -> double& { return c.tol; });
    real("epsilon", "perturbation amplitude", [](RunConfig& c) -> double& { return c.perturbation.epsilon; });
    real("taper", "radial_dilation taper a in x(1 + eps(1 - a (x/R)^2))",
         [](RunConfig& c) -> double& { return c.perturbation.taper; });
    real("bump_power", "polynomial_bump exponent k", [](RunConfig& c) -> double& { return c.perturbation.bump_power; });
    real("kick_ratio", "composite velocity amplitude relative to epsilon",
         [](RunConfig& c) -> double& { return c.perturbation.kick_ratio; });
    real("max_amplitude", "admissible |epsilon|", [](RunConfig& c) -> double& { return c.perturbation.max_amplitude; });
    real("dt", "time step (0 selects the adaptive default)", [](RunConfig& c) -> double& { return c.policy.dt; });
    real("cfl_safety", "stability safety factor", [](RunConfig& c) -> double& { return c.policy.cfl_safety; });
    real("t_end", "final time", [](RunConfig& c) -> double& { return c.policy.t_end; });
    real("blowup_factor", "functional ceiling factor", [](RunConfig& c) -> double& { return c.policy.blowup_factor; });
    real("sample_interval", "diagnostic sampling interval", [](RunConfig& c) -> double& { return c.sample_interval; });
    real("theta", "decay exponent loss theta", [](RunConfig& c) -> double& { return c.theta; });
    real("slack", "fit slack on exponents", [](RunConfig& c) -> double& { return c.slack; });
    real("fit_t_a", "fit window start (negative: max(t_end/4, 5))", [](RunConfig& c) -> double& { return c.fit_t_a; });
    real("fit_t_b", "fit window end (negative: t_end)", [](RunConfig& c) -> double& { return c.fit_t_b; });
    real("delta", "inner interval fraction for restricted norms", [](RunConfig& c) -> double& { return c.delta; });

    k["N"] = KeyInfo{"number of grid cells",
                     [](RunConfig& c, const std::string& v) { c.N = static_cast<int>(detail::parse_long("N", v)); },
                     [](const RunConfig& c) { return json(c.N); }};
    k["max_steps"] = KeyInfo{"step budget",
                             [](RunConfig& c, const std::string& v) { c.policy.max_steps = detail::parse_long("max_steps", v); },
                             [](const RunConfig& c) { return json(c.policy.max_steps); }};
    k["max_retries"] = KeyInfo{
        "dt halvings per failed step",
        [](RunConfig& c, const std::string& v) { c.policy.max_retries = static_cast<int>(detail::parse_long("max_retries", v)); },
        [](const RunConfig& c) { return json(c.policy.max_retries); }};
    k["workers"] = KeyInfo{"sweep worker threads (0: LESTAB_WORKERS or hardware)",
                           [](RunConfig& c, const std::string& v) { c.workers = static_cast<int>(detail::parse_long("workers", v)); },
                           [](const RunConfig& c) { return json(c.workers); }};
    k["family"] = KeyInfo{"radial_dilation | polynomial_bump | velocity_kick | composite",
                          [](RunConfig& c, const std::string& v) { c.perturbation.family = parse_family(v); },
                          [](const RunConfig& c) { return json(std::string(to_string(c.perturbation.family))); }};
    k["boundary"] = KeyInfo{"equilibrium_compatible | as_given",
                            [](RunConfig& c, const std::string& v) { c.perturbation.boundary = parse_placement(v); },
                            [](const RunConfig& c) { return json(std::string(to_string(c.perturbation.boundary))); }};
    k["mode"] = KeyInfo{"explicit_rk4 | imex_be | imex_cn",
                        [](RunConfig& c, const std::string& v) { c.policy.mode = parse_step_mode(v); },
                        [](const RunConfig& c) { return json(std::string(to_string(c.policy.mode))); }};
    k["enforce_limits"] = KeyInfo{"cap dt by the stability limit of the mode",
                                  [](RunConfig& c, const std::string& v) { c.policy.enforce_limits = detail::parse_bool("enforce_limits", v); },
                                  [](const RunConfig& c) { return json(c.policy.enforce_limits); }};
    k["allow_edge"] = KeyInfo{"admit 1 < gamma <= 2 instead of 4/3 < gamma < 2",
                              [](RunConfig& c, const std::string& v) { c.allow_edge = detail::parse_bool("allow_edge", v); },
                              [](const RunConfig& c) { return json(c.allow_edge); }};
    k["alpha_list"] = KeyInfo{"comma-separated alphas for F_alpha (empty: gamma-1, gamma, 2gamma-1)",
                              [](RunConfig& c, const std::string& v) { c.alpha_list = detail::parse_list("alpha_list", v); },
                              [](const RunConfig& c) { return json(c.alpha_list); }};
    k["output_dir"] = KeyInfo{"directory receiving the artifacts",
                              [](RunConfig& c, const std::string& v) { c.output_dir = v; },
                              [](const RunConfig& c) { return json(c.output_dir); }};
    return k;
  }();
  return keys;
}

/// Sets one key; unknown keys are fatal.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  const auto& keys = config_keys();
  const auto it = keys.find(key);
  if (it == keys.end()) throw Error(ErrorKind::config, "unknown key '" + key + "'");
  it->second.set(c, value);
}

/// Checks the parameter constraints of the problem.
inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::config, m); };
  std::ostringstream g;
  g << c.gamma;
  if (c.allow_edge) {
    if (!(c.gamma > 1.0 && c.gamma <= 2.0)) fail("gamma = " + g.str() + " outside 1 < gamma <= 2 (allow_edge)");
  } else if (!(c.gamma > 4.0 / 3.0 && c.gamma < 2.0)) {
    fail("gamma = " + g.str() +
         " outside the stability range gamma in (4/3, 2); set allow_edge = true for edge cases");
  }
  if (!(c.total_mass > 0.0)) fail("total_mass must be > 0");
  if (!(c.lambda1 > 0.0)) fail("lambda1 must be > 0 (shear viscosity positivity)");
  if (!(c.lambda2 > 0.0)) fail("lambda2 must be > 0 (bulk viscosity positivity)");
  if (c.N < 16) fail("N must be >= 16");
  if (!(c.tol > 0.0)) fail("tol must be > 0");
  if (!(c.policy.t_end >= 0.0)) fail("t_end must be >= 0");
  if (!(c.policy.dt >= 0.0)) fail("dt must be >= 0 (0 selects the adaptive default)");
  if (!(c.policy.cfl_safety > 0.0 && c.policy.cfl_safety <= 1.0)) fail("cfl_safety must lie in (0, 1]");
  if (c.policy.max_steps <= 0) fail("max_steps must be > 0");
  if (c.policy.max_retries < 0) fail("max_retries must be >= 0");
  if (!(c.policy.blowup_factor > 0.0)) fail("blowup_factor must be > 0");
  if (!(c.sample_interval > 0.0)) fail("sample_interval must be > 0");
  if (!(c.theta > 0.0)) fail("theta must be > 0");
  if (!(c.slack >= 0.0)) fail("slack must be >= 0");
  if (!(c.delta > 0.0 && c.delta < 1.0)) fail("delta must lie in (0, 1)");
  if (!(c.perturbation.max_amplitude > 0.0)) fail("max_amplitude must be > 0");
  if (!std::isfinite(c.perturbation.epsilon)) fail("epsilon must be finite");
  if (c.workers < 0) fail("workers must be >= 0");
  if (c.output_dir.empty()) fail("output_dir must not be empty");
}

/// Parses `key = value` lines; `#` starts a comment. Duplicate and unknown keys are fatal.
inline RunConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
  RunConfig c;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto where = origin + ":" + std::to_string(lineno) + ": ";
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::config, where + "expected key = value");
    const auto key = detail::trim(std::string_view(text).substr(0, eq));
    const auto value = detail::trim(std::string_view(text).substr(eq + 1));
    if (!seen.insert(key).second) throw Error(ErrorKind::config, where + "duplicate key '" + key + "'");
    try {
      apply_setting(c, key, value);
    } catch (const Error& e) {
      std::string msg = e.what();
      const std::string prefix = "config: ";
      if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
      throw Error(ErrorKind::config, where + msg);
    }
  }
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

/// Loads and validates a config file, then applies overrides (which take precedence).
inline RunConfig load_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  RunConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config, "cannot open config file '" + path + "'");
    c = parse_config(in, path);
  }
  for (const auto& [k, v] : overrides) apply_setting(c, k, v);
  validate(c);
  return c;
}

/// Echo of every key, for metadata.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, info] : config_keys()) j[name] = info.get(c);
  return j;
}

/// Worker count: config value, else LESTAB_WORKERS, else the hardware concurrency.
inline int resolve_workers(const RunConfig& c, unsigned hardware) {
  if (c.workers > 0) return c.workers;
  if (const char* env = std::getenv("LESTAB_WORKERS")) {
    const long w = detail::parse_long("LESTAB_WORKERS", env);
    if (w <= 0) throw Error(ErrorKind::config, "LESTAB_WORKERS must be a positive integer");
    return static_cast<int>(w);
  }
  return hardware > 0 ? static_cast<int>(hardware) : 1;
}

}  // namespace lestab::harness

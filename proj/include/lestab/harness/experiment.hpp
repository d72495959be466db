#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lestab/diagnostics.hpp"
#include "lestab/error.hpp"
#include "lestab/harness/config.hpp"
#include "lestab/harness/io.hpp"
#include "lestab/initial_data.hpp"
#include "lestab/integrator.hpp"
#include "lestab/linearized.hpp"
#include "lestab/polytrope.hpp"
#include "lestab/scheme.hpp"

namespace lestab::harness {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { exit_ok = 0, exit_other = 1, exit_config = 2, exit_solver = 3, exit_mesh = 4, exit_blowup = 5 };

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_perturbation:
    case ErrorKind::same_mass_violation:
    case ErrorKind::invalid_density: return exit_config;
    case ErrorKind::domain:
    case ErrorKind::unsupported_index:
    case ErrorKind::solver_failure:
    case ErrorKind::insufficient_resolution:
    case ErrorKind::step_failure: return exit_solver;
    case ErrorKind::mesh_tangling: return exit_mesh;
    case ErrorKind::blow_up: return exit_blowup;
    case ErrorKind::cannot_fit:
    case ErrorKind::io: return exit_other;
  }
  return exit_other;
}

inline int exit_code_for(Termination t) {
  switch (t) {
    case Termination::t_end:
    case Termination::max_steps: return exit_ok;
    case Termination::mesh_tangling: return exit_mesh;
    case Termination::blow_up: return exit_blowup;
    case Termination::step_failure: return exit_solver;
  }
  return exit_other;
}

inline CsvTable profile_table(const PolytropeProfile& p) {
  CsvTable t;
  t.header = {{"gamma", p.gamma},
              {"total_mass", p.total_mass},
              {"radius", p.radius_bar_R},
              {"rho_center", p.rho_center},
              {"polytropic_index", p.polytropic_index},
              {"tol", p.tol}};
  t.columns = {"x", "rho", "q", "phi"};
  for (const auto& row : p.table()) t.rows.push_back({row.x, row.rho, row.q, row.phi});
  return t;
}

inline std::vector<std::string> diagnostic_columns(const std::vector<double>& alphas) {
  std::vector<std::string> c = {"t", "E_N", "E_script"};
  for (std::size_t k = 0; k < alphas.size(); ++k) c.push_back("F_alpha_" + std::to_string(k));
  for (const char* name : {"sup_r_minus_x", "sup_v", "sup_rx_minus_1", "sup_vx", "sup_ur", "rho_weighted", "L2_v",
                           "L2_xvx", "L2_r_minus_x", "L2_weighted_v", "L2_weighted_r", "rxx_L2_inner", "R_t",
                           "R_residual", "boundary_accel", "boundary_stress", "phys_energy", "dissipation_rate"}) {
    c.emplace_back(name);
  }
  return c;
}

inline std::vector<double> diagnostic_row(const DiagnosticRecord& r) {
  std::vector<double> v = {r.t, r.E_N, r.E_script};
  v.insert(v.end(), r.F_alpha.begin(), r.F_alpha.end());
  v.insert(v.end(), {r.sup_r_minus_x, r.sup_v, r.sup_rx_minus_1, r.sup_vx, r.sup_ur, r.rho_weighted, r.L2_v,
                     r.L2_xvx, r.L2_r_minus_x, r.L2_weighted_v, r.L2_weighted_r, r.rxx_L2_inner, r.R_t,
                     r.R_residual, r.boundary_accel, r.boundary_stress, r.phys_energy, r.dissipation_rate});
  return v;
}

/// Time-series column paired with its theoretical decay floor.
inline std::vector<std::pair<std::string, double>> fitted_quantities(const DecayExponentTable& e) {
  return {{"sup_r_minus_x", e.p_r_Linf}, {"sup_v", e.p_u_Linf},      {"sup_ur", e.p_ur_Linf},
          {"rho_weighted", e.p_rho_weighted}, {"L2_v", e.p_v_L2}, {"L2_r_minus_x", e.p_rminusx_L2}};
}

inline json to_json(const DecayFitResult& r) {
  return {{"quantity", r.quantity},
          {"window", {r.t_a, r.t_b}},
          {"samples", r.samples},
          {"fitted_exponent", r.fitted_exponent},
          {"fit_residual", r.fit_residual},
          {"theoretical_floor", r.theoretical_floor},
          {"slack", r.slack},
          {"pass", r.pass},
          {"status", r.status}};
}

/// Fits every tabulated quantity present in the table; a quantity that cannot be fitted is
/// reported with its error instead of aborting the report.
inline json fit_report(const CsvTable& table, double gamma, double theta, double slack, double t_a, double t_b) {
  json report = {{"gamma", gamma}, {"theta", theta}, {"slack", slack}, {"window", {t_a, t_b}}};
  DecayExponentTable exps;
  try {
    exps = theoretical_exponents(gamma, theta);
  } catch (const Error& e) {
    report["status"] = "error";
    report["error"] = e.what();
    report["fits"] = json::array();
    return report;
  }
  report["theoretical"] = {{"p_r_Linf", exps.p_r_Linf},         {"p_u_Linf", exps.p_u_Linf},
                           {"p_ur_Linf", exps.p_ur_Linf},       {"p_rho_weighted", exps.p_rho_weighted},
                           {"p_v_L2", exps.p_v_L2},             {"p_rminusx_L2", exps.p_rminusx_L2}};
  const auto t = table.values("t");
  json fits = json::array();
  bool all_pass = true;
  for (const auto& [name, floor] : fitted_quantities(exps)) {
    if (std::find(table.columns.begin(), table.columns.end(), name) == table.columns.end()) continue;
    try {
      const auto r = fit_decay(name, t, table.values(name), t_a, t_b, floor, slack);
      all_pass = all_pass && r.pass;
      fits.push_back(to_json(r));
    } catch (const Error& e) {
      all_pass = false;
      fits.push_back({{"quantity", name}, {"theoretical_floor", floor}, {"pass", false}, {"status", "error"},
                      {"error", e.what()}});
    }
  }
  report["fits"] = fits;
  report["status"] = all_pass ? "pass" : "fail";
  return report;
}

inline CsvTable diagnostic_table(const RunConfig& cfg, const PolytropeProfile& p, const std::vector<double>& alphas,
                                 const std::vector<DiagnosticRecord>& records) {
  CsvTable t;
  t.header = {{"schema_version", kSchemaVersion}, {"gamma", cfg.gamma},          {"total_mass", cfg.total_mass},
              {"radius", p.radius_bar_R},         {"N", cfg.N},                   {"theta", cfg.theta},
              {"slack", cfg.slack},               {"alpha_list", alphas},         {"delta", cfg.delta},
              {"family", std::string(to_string(cfg.perturbation.family))},     {"epsilon", cfg.perturbation.epsilon}};
  t.columns = diagnostic_columns(alphas);
  for (const auto& r : records) t.rows.push_back(diagnostic_row(r));
  return t;
}

struct ExperimentResult {
  int exit_code = exit_ok;
  std::string status = "ok";
  std::string message;
  std::optional<DiagnosticRecord> final_record;
  json fits;
};

/// Single run writing profile.csv, timeseries.csv, metadata.jsonl and fits.json into
/// cfg.output_dir. Failures after the directory exists still leave all four files, with the
/// failure recorded in the metadata and fit report.
inline ExperimentResult run_experiment(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = cfg.output_dir;
  ensure_directory(dir);
  ExperimentResult result;
  std::vector<DiagnosticRecord> records;
  std::optional<PolytropeProfile> profile;
  std::vector<double> alphas;
  json meta = {{"type", "run"}, {"config", to_json(cfg)}};
  Termination reason = Termination::t_end;
  long steps = 0;

  try {
    profile = solve_lane_emden(cfg.gamma, cfg.total_mass, cfg.tol);
    write_csv(dir / "profile.csv", profile_table(*profile));
    const auto bg = sample_background(*profile, cfg.N, cfg.lambda1, cfg.lambda2);
    DiagnosticOptions opt{cfg.alpha_list, cfg.delta};
    alphas = opt.alphas(cfg.gamma);
    DiagnosticRecorder recorder(bg, opt);
    auto state0 = build_perturbation(bg, cfg.perturbation);
    const NonlinearSystem sys{bg};
    try {
      const auto run_result = run(sys, std::move(state0), cfg.policy,
                                  [&](const LagrangianState& s) { recorder.record(s); }, cfg.sample_interval);
      reason = run_result.reason;
      steps = run_result.steps;
      result.message = run_result.message;
    } catch (...) {
      records = recorder.records();
      throw;
    }
    records = recorder.records();
    result.exit_code = exit_code_for(reason);
    result.status = std::string(to_string(reason));
    meta["radius"] = profile->radius_bar_R;
    meta["rho_center"] = profile->rho_center;
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e.kind());
    result.status = std::string(to_string(e.kind()));
    result.message = e.what();
  }

  if (alphas.empty()) alphas = DiagnosticOptions{cfg.alpha_list, cfg.delta}.alphas(cfg.gamma);
  const auto table = profile ? diagnostic_table(cfg, *profile, alphas, records) : CsvTable{};
  if (profile) {
    write_csv(dir / "timeseries.csv", table);
  } else {
    CsvTable empty;
    empty.header = {{"schema_version", kSchemaVersion}, {"status", result.status}};
    empty.columns = diagnostic_columns(alphas);
    write_csv(dir / "timeseries.csv", empty);
    write_csv(dir / "profile.csv", CsvTable{{{"status", result.status}}, {"x", "rho", "q", "phi"}, {}});
  }
  if (!records.empty()) result.final_record = records.back();

  if (result.exit_code == exit_ok && profile) {
    result.fits = fit_report(table, cfg.gamma, cfg.theta, cfg.slack, cfg.window_lo(), cfg.window_hi());
  } else {
    result.fits = {{"status", "not fitted"}, {"reason", result.status}, {"message", result.message},
                   {"fits", json::array()}};
  }
  write_json(dir / "fits.json", result.fits);

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  meta["status"] = result.status;
  meta["exit_code"] = result.exit_code;
  meta["message"] = result.message;
  meta["steps"] = steps;
  meta["samples"] = records.size();
  meta["wall_time_s"] = wall;
  if (result.final_record) {
    const auto& f = *result.final_record;
    meta["final"] = {{"t", f.t},         {"E_N", f.E_N},
                     {"E_script", f.E_script}, {"phys_energy", f.phys_energy},
                     {"sup_r_minus_x", f.sup_r_minus_x}, {"sup_v", f.sup_v},
                     {"R_residual", f.R_residual},       {"boundary_stress", f.boundary_stress}};
  }
  meta["fit_status"] = result.fits.value("status", "");
  append_jsonl(dir / "metadata.jsonl", meta);
  return result;
}

struct LinearizeResult {
  int exit_code = exit_ok;
  double energy_residual = 0.0;
  double initial_energy = 0.0;
  std::vector<LinearRecord> records;
};

/// Linear run writing linear.csv and metadata.jsonl into cfg.output_dir. The perturbation
/// family is evaluated at unit amplitude.
inline LinearizeResult run_linearize(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = cfg.output_dir;
  ensure_directory(dir);
  LinearizeResult res;
  json meta = {{"type", "linearize"}, {"config", to_json(cfg)}};
  meta["extrapolated_viscosity"] = std::abs(cfg.lambda1 - 0.5) > 1e-15 || std::abs(cfg.lambda2 - 1.0 / 3.0) > 1e-15;
  std::string status = "t_end";
  try {
    const auto profile = solve_lane_emden(cfg.gamma, cfg.total_mass, cfg.tol);
    const auto bg = sample_background(profile, cfg.N, cfg.lambda1, cfg.lambda2);
    const LinearSystem sys{bg};
    const auto run_result = run_linear(sys, linear_initial_data(bg, cfg.perturbation), cfg.policy,
                                       [&](const LinearState& s) { res.records.push_back(linear_record(bg, sys.op, s)); },
                                       cfg.sample_interval);
    status = std::string(to_string(run_result.reason));
    res.exit_code = exit_code_for(run_result.reason);
    meta["coercive"] = 3.0 * cfg.gamma - 4.0 > 0.0;
  } catch (const Error& e) {
    res.exit_code = exit_code_for(e.kind());
    status = std::string(to_string(e.kind()));
    meta["message"] = e.what();
  }
  CsvTable t;
  t.header = {{"schema_version", kSchemaVersion}, {"gamma", cfg.gamma}, {"N", cfg.N},
              {"family", std::string(to_string(cfg.perturbation.family))}};
  t.columns = {"t", "energy", "dissipation", "sup_w", "sup_wt", "boundary_residual"};
  for (const auto& r : res.records) {
    t.rows.push_back({r.t, r.energy, r.dissipation, r.sup_w, r.sup_wt, r.boundary_residual});
  }
  write_csv(dir / "linear.csv", t);
  if (!res.records.empty()) {
    res.energy_residual = energy_identity_residual(res.records);
    res.initial_energy = res.records.front().energy;
    meta["energy_identity_residual"] = res.energy_residual;
    meta["initial_energy"] = res.initial_energy;
    meta["final_energy"] = res.records.back().energy;
  }
  meta["status"] = status;
  meta["exit_code"] = res.exit_code;
  meta["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  append_jsonl(dir / "metadata.jsonl", meta);
  return res;
}

/// Initial data table: x, r0, v0 and the discrete r_x (backward difference; the n = 0 row
/// repeats the first cell).
inline CsvTable describe_initial_data(const RunConfig& cfg) {
  const auto profile = solve_lane_emden(cfg.gamma, cfg.total_mass, cfg.tol);
  const auto bg = sample_background(profile, cfg.N, cfg.lambda1, cfg.lambda2);
  const auto s = build_perturbation(bg, cfg.perturbation);
  const auto compat = check_compatibility(s, bg);
  CsvTable t;
  t.header = {{"schema_version", kSchemaVersion},
              {"gamma", cfg.gamma},
              {"total_mass", cfg.total_mass},
              {"radius", bg.radius},
              {"N", cfg.N},
              {"family", std::string(to_string(cfg.perturbation.family))},
              {"epsilon", cfg.perturbation.epsilon},
              {"compatible", compat.pass},
              {"violations", compat.violations},
              {"boundary_stress", compat.boundary_stress}};
  t.columns = {"x", "r0", "v0", "rx"};
  for (int n = 0; n <= bg.N; ++n) {
    const int k = std::max(n, 1);
    t.rows.push_back({bg.x[n], s.r[n], s.v[n], (s.r[k] - s.r[k - 1]) / bg.h});
  }
  return t;
}

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

struct SweepPoint {
  std::vector<std::string> values;  // one per axis
  fs::path directory;
  int exit_code = exit_ok;
  std::string status;
  std::string message;
  double terminal_sup_r_minus_x = std::nan("");
  json fits;
};

/// Parses `key=v1,v2,...`.
inline SweepAxis parse_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::config, "sweep axis '" + text + "' is not key=v1,v2,...");
  SweepAxis a;
  a.key = detail::trim(std::string_view(text).substr(0, eq));
  std::stringstream ss(text.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto v = detail::trim(item);
    if (!v.empty()) a.values.push_back(std::move(v));
  }
  if (a.values.empty()) throw Error(ErrorKind::config, "sweep axis '" + a.key + "' has no values");
  if (!config_keys().count(a.key)) throw Error(ErrorKind::config, "unknown sweep key '" + a.key + "'");
  if (a.key == "output_dir") throw Error(ErrorKind::config, "output_dir cannot be swept");
  return a;
}

struct SweepReport {
  std::vector<SweepAxis> axes;
  std::vector<SweepPoint> points;
  CsvTable aggregate;
};

/// Cartesian product of the axes; each point runs in its own sub-directory of
/// base.output_dir, and aggregate.csv summarizes fitted exponents and pass flags. A failed
/// point is recorded and the sweep continues.
inline SweepReport sweep(const RunConfig& base, const std::vector<SweepAxis>& axes, int workers) {
  SweepReport rep;
  rep.axes = axes;
  const fs::path root = base.output_dir;
  ensure_directory(root);

  std::vector<std::vector<std::string>> combos{{}};
  for (const auto& a : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& c : combos) {
      for (const auto& v : a.values) {
        auto d = c;
        d.push_back(v);
        next.push_back(std::move(d));
      }
    }
    combos = std::move(next);
  }
  rep.points.resize(combos.size());
  std::vector<std::optional<RunConfig>> configs(combos.size());
  for (std::size_t i = 0; i < combos.size(); ++i) {
    auto& p = rep.points[i];
    p.values = combos[i];
    char name[32];
    std::snprintf(name, sizeof name, "point_%03zu", i);
    p.directory = root / name;
    RunConfig c = base;
    try {
      for (std::size_t k = 0; k < axes.size(); ++k) apply_setting(c, axes[k].key, combos[i][k]);
      c.output_dir = p.directory.string();
      validate(c);
      configs[i] = c;
    } catch (const Error& e) {
      p.exit_code = exit_code_for(e.kind());
      p.status = std::string(to_string(e.kind()));
      p.message = e.what();
      ensure_directory(p.directory);
      append_jsonl(p.directory / "metadata.jsonl",
                   {{"type", "run"}, {"status", p.status}, {"exit_code", p.exit_code}, {"message", p.message}});
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < combos.size(); i = next++) {
      if (!configs[i]) continue;
      auto& p = rep.points[i];
      try {
        const auto r = run_experiment(*configs[i]);
        p.exit_code = r.exit_code;
        p.status = r.status;
        p.message = r.message;
        p.fits = r.fits;
        if (r.final_record) p.terminal_sup_r_minus_x = r.final_record->sup_r_minus_x;
      } catch (const std::exception& e) {
        p.exit_code = exit_other;
        p.status = "error";
        p.message = e.what();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(combos.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  // Aggregate: numeric axis values are written as numbers, others by their index in the axis.
  auto& t = rep.aggregate;
  json axis_json = json::array();
  for (const auto& a : axes) axis_json.push_back({{"key", a.key}, {"values", a.values}});
  json point_json = json::array();
  for (const auto& p : rep.points) {
    point_json.push_back({{"directory", p.directory.filename().string()}, {"status", p.status}, {"message", p.message}});
  }
  t.header = {{"schema_version", kSchemaVersion}, {"axes", axis_json}, {"points", point_json}};
  t.columns = {"point"};
  for (const auto& a : axes) t.columns.push_back(a.key);
  auto swept = [&](const std::string& key) {
    return std::any_of(axes.begin(), axes.end(), [&](const SweepAxis& a) { return a.key == key; });
  };
  for (const char* c : {"gamma", "epsilon", "N"}) {
    if (!swept(c)) t.columns.emplace_back(c);
  }
  for (const char* c : {"exit_code", "terminal_sup_r_minus_x", "cauchy_diff"}) t.columns.emplace_back(c);
  const std::vector<std::string> quantities = {"sup_r_minus_x", "sup_v", "sup_ur", "rho_weighted", "L2_v", "L2_r_minus_x"};
  for (const auto& q : quantities) {
    t.columns.push_back("exponent_" + q);
    t.columns.push_back("pass_" + q);
  }

  auto numeric = [](const std::string& s, std::size_t index) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    return (!s.empty() && end == s.c_str() + s.size()) ? v : static_cast<double>(index);
  };
  std::vector<RunConfig> point_cfg;
  for (std::size_t i = 0; i < rep.points.size(); ++i) point_cfg.push_back(configs[i] ? *configs[i] : base);

  // Cauchy difference against the point with the next smaller N and otherwise equal axes.
  std::vector<double> cauchy(rep.points.size(), std::nan(""));
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < rep.points.size(); ++j) {
      if (point_cfg[j].N >= point_cfg[i].N) continue;
      bool same = true;
      for (std::size_t k = 0; k < axes.size(); ++k) {
        if (axes[k].key != "N" && rep.points[i].values[k] != rep.points[j].values[k]) same = false;
      }
      if (same && (!best || point_cfg[j].N > point_cfg[*best].N)) best = j;
    }
    if (best) cauchy[i] = std::abs(rep.points[i].terminal_sup_r_minus_x - rep.points[*best].terminal_sup_r_minus_x);
  }

  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    const auto& p = rep.points[i];
    std::vector<double> row = {static_cast<double>(i)};
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const auto& vals = axes[k].values;
      const auto idx = static_cast<std::size_t>(std::find(vals.begin(), vals.end(), p.values[k]) - vals.begin());
      row.push_back(numeric(p.values[k], idx));
    }
    if (!swept("gamma")) row.push_back(point_cfg[i].gamma);
    if (!swept("epsilon")) row.push_back(point_cfg[i].perturbation.epsilon);
    if (!swept("N")) row.push_back(static_cast<double>(point_cfg[i].N));
    row.insert(row.end(), {static_cast<double>(p.exit_code), p.terminal_sup_r_minus_x, cauchy[i]});
    for (const auto& q : quantities) {
      double exponent = std::nan("");
      double pass = 0.0;
      if (p.fits.is_object() && p.fits.contains("fits")) {
        for (const auto& f : p.fits["fits"]) {
          if (f.value("quantity", "") != q) continue;
          if (f.contains("fitted_exponent")) exponent = f["fitted_exponent"].get<double>();
          pass = f.value("pass", false) ? 1.0 : 0.0;
        }
      }
      row.push_back(exponent);
      row.push_back(pass);
    }
    t.rows.push_back(std::move(row));
  }
  write_csv(root / "aggregate.csv", t);
  return rep;
}

}  // namespace lestab::harness

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lestab/harness/config.hpp"
#include "lestab/harness/experiment.hpp"
#include "lestab/harness/io.hpp"

namespace h = lestab::harness;
using nlohmann::json;

namespace {

/// One string flag per config key; set flags override the config file.
struct KeyFlags {
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    for (const auto& [key, info] : h::config_keys()) {
      std::string names = "--" + key;
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != key) names += ",--" + dashed;
      app->add_option(names, values[key], info.description);
    }
  }

  std::vector<std::pair<std::string, std::string>> overrides(const CLI::App* app) const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [key, value] : values) {
      if (app->get_option("--" + key)->count() > 0) out.emplace_back(key, value);
    }
    return out;
  }
};

int report_error(const lestab::Error& e) {
  std::cerr << "lestab: " << e.what() << '\n';
  return h::exit_code_for(e.kind());
}

void print_summary(const h::ExperimentResult& r, const std::string& dir) {
  std::cout << "status: " << r.status << " (exit " << r.exit_code << ")\n";
  if (!r.message.empty()) std::cout << "message: " << r.message << '\n';
  if (r.final_record) {
    std::cout << "t = " << r.final_record->t << "  E_N = " << r.final_record->E_N
              << "  sup|r-x| = " << r.final_record->sup_r_minus_x << "  sup|v| = " << r.final_record->sup_v << '\n';
  }
  std::cout << "fits: " << r.fits.value("status", "") << '\n';
  std::cout << "artifacts in " << dir << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Navier-Stokes-Poisson vacuum free-boundary simulator around Lane-Emden stars"};
  app.require_subcommand(1);

  // profile
  auto* profile_cmd = app.add_subcommand("profile", "solve the Lane-Emden profile and write x, rho, q, phi");
  double p_gamma = 1.5, p_mass = 1.0, p_tol = 1e-10;
  std::string p_out;
  bool p_edge = false;
  profile_cmd->add_option("--gamma", p_gamma, "adiabatic exponent")->required();
  profile_cmd->add_option("--mass,--total_mass,--total-mass", p_mass, "total mass M")->required();
  profile_cmd->add_option("--out", p_out, "output CSV")->required();
  profile_cmd->add_option("--tol", p_tol, "solver tolerance");
  profile_cmd->add_flag("--allow-edge,--allow_edge", p_edge, "admit 1 < gamma <= 2");

  // simulate / linearize / describe-ic / sweep share the config schema
  std::string config_path;
  auto* sim_cmd = app.add_subcommand("simulate", "run the nonlinear scheme and write all artifacts");
  auto* lin_cmd = app.add_subcommand("linearize", "run the linearized problem and write linear.csv");
  auto* ic_cmd = app.add_subcommand("describe-ic", "write the constructed initial data (x, r0, v0, rx)");
  auto* sweep_cmd = app.add_subcommand("sweep", "run a Cartesian parameter sweep");
  KeyFlags sim_flags, lin_flags, ic_flags, sweep_flags;
  std::string ic_out;
  std::vector<std::string> axes;
  for (auto [cmd, flags] : {std::pair{sim_cmd, &sim_flags}, std::pair{lin_cmd, &lin_flags},
                            std::pair{ic_cmd, &ic_flags}, std::pair{sweep_cmd, &sweep_flags}}) {
    cmd->add_option("--config,-c", config_path, "key = value config file");
    flags->attach(cmd);
  }
  ic_cmd->add_option("--out", ic_out, "output CSV (default: <output_dir>/initial_data.csv)");
  sweep_cmd->add_option("--axis", axes, "sweep axis key=v1,v2,... (repeatable)")->required();

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit decay exponents of a time-series CSV");
  std::string fit_in, fit_out;
  std::optional<double> fit_gamma, fit_theta, fit_slack, fit_ta, fit_tb;
  fit_cmd->add_option("--in", fit_in, "time-series CSV")->required();
  fit_cmd->add_option("--out", fit_out, "output JSON (default: stdout)");
  fit_cmd->add_option("--gamma", fit_gamma, "adiabatic exponent (default: CSV header)");
  fit_cmd->add_option("--theta", fit_theta, "theta (default: CSV header, else 0.05)");
  fit_cmd->add_option("--slack", fit_slack, "exponent slack (default: CSV header, else 0.05)");
  fit_cmd->add_option("--t-a,--t_a", fit_ta, "window start (default: max(t_end/4, 5))");
  fit_cmd->add_option("--t-b,--t_b", fit_tb, "window end (default: t_end)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return h::exit_config;
  }

  try {
    if (*profile_cmd) {
      h::RunConfig c;
      c.gamma = p_gamma;
      c.total_mass = p_mass;
      c.tol = p_tol;
      c.allow_edge = p_edge;
      h::validate(c);
      const auto profile = lestab::solve_lane_emden(p_gamma, p_mass, p_tol);
      h::write_csv(p_out, h::profile_table(profile));
      std::cout << "R = " << h::format_double(profile.radius_bar_R)
                << "  rho(0) = " << h::format_double(profile.rho_center) << "  -> " << p_out << '\n';
      return 0;
    }
    if (*sim_cmd) {
      const auto cfg = h::load_config(config_path, sim_flags.overrides(sim_cmd));
      const auto r = h::run_experiment(cfg);
      print_summary(r, cfg.output_dir);
      return r.exit_code;
    }
    if (*lin_cmd) {
      const auto cfg = h::load_config(config_path, lin_flags.overrides(lin_cmd));
      const auto r = h::run_linearize(cfg);
      if (!r.records.empty()) {
        std::cout << "E(0) = " << r.initial_energy << "  E(T) = " << r.records.back().energy
                  << "  identity residual = " << r.energy_residual << '\n';
      }
      std::cout << "artifacts in " << cfg.output_dir << '\n';
      return r.exit_code;
    }
    if (*ic_cmd) {
      const auto cfg = h::load_config(config_path, ic_flags.overrides(ic_cmd));
      const std::string out = ic_out.empty() ? (std::filesystem::path(cfg.output_dir) / "initial_data.csv").string() : ic_out;
      const auto table = h::describe_initial_data(cfg);
      h::write_csv(out, table);
      std::cout << "compatible: " << (table.header["compatible"].get<bool>() ? "yes" : "no") << "  -> " << out << '\n';
      return 0;
    }
    if (*sweep_cmd) {
      const auto cfg = h::load_config(config_path, sweep_flags.overrides(sweep_cmd));
      std::vector<h::SweepAxis> parsed;
      for (const auto& a : axes) parsed.push_back(h::parse_axis(a));
      const int workers = h::resolve_workers(cfg, std::thread::hardware_concurrency());
      const auto rep = h::sweep(cfg, parsed, workers);
      int failures = 0;
      for (const auto& p : rep.points) {
        std::cout << p.directory.filename().string() << ": " << p.status << " (exit " << p.exit_code << ")\n";
        if (p.exit_code != 0) ++failures;
      }
      std::cout << rep.points.size() << " points, " << failures << " failed; aggregate in "
                << (std::filesystem::path(cfg.output_dir) / "aggregate.csv").string() << '\n';
      return 0;
    }
    if (*fit_cmd) {
      const auto table = h::read_csv(fit_in);
      const auto& hd = table.header;
      const double gamma = fit_gamma ? *fit_gamma : hd.value("gamma", std::nan(""));
      if (!std::isfinite(gamma)) throw lestab::Error(lestab::ErrorKind::config, "gamma not in CSV header; pass --gamma");
      const double theta = fit_theta ? *fit_theta : hd.value("theta", 0.05);
      const double slack = fit_slack ? *fit_slack : hd.value("slack", 0.05);
      const auto t = table.values("t");
      const double t_end = t.empty() ? 0.0 : t.back();
      const double ta = fit_ta ? *fit_ta : std::max(0.25 * t_end, 5.0);
      const double tb = fit_tb ? *fit_tb : t_end;
      const auto report = h::fit_report(table, gamma, theta, slack, ta, tb);
      if (fit_out.empty()) {
        std::cout << report.dump(2) << '\n';
      } else {
        h::write_json(fit_out, report);
        std::cout << "fits: " << report.value("status", "") << "  -> " << fit_out << '\n';
      }
      return report.value("status", "") == "error" ? h::exit_other : 0;
    }
  } catch (const lestab::Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::cerr << "lestab: " << e.what() << '\n';
    return h::exit_other;
  }
  return 0;
}

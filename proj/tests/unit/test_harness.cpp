#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "lestab/harness/config.hpp"
#include "lestab/harness/experiment.hpp"
#include "lestab/harness/io.hpp"

using namespace lestab;
using namespace lestab::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lestab_unit_" + name);
  fs::remove_all(dir);
  return dir;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::io;
}

std::string error_text(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

RunConfig quick(const fs::path& dir) {
  RunConfig c;
  c.total_mass = 10.0;
  c.N = 100;
  c.policy.t_end = 10.0;
  c.sample_interval = 0.25;
  c.output_dir = dir.string();
  return c;
}

nlohmann::json last_metadata(const fs::path& dir) {
  std::ifstream in(dir / "metadata.jsonl");
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  return nlohmann::json::parse(last);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LESTAB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, Defaults) {
  const RunConfig c;
  EXPECT_DOUBLE_EQ(c.gamma, 1.5);
  EXPECT_DOUBLE_EQ(c.lambda1, 0.5);
  EXPECT_DOUBLE_EQ(c.lambda2, 1.0 / 3.0);
  EXPECT_EQ(c.N, 400);
  EXPECT_EQ(c.policy.mode, StepMode::imex_cn);
  EXPECT_DOUBLE_EQ(c.window_lo(), 50.0);
  EXPECT_DOUBLE_EQ(c.window_hi(), 200.0);
  EXPECT_NO_THROW(validate(c));
  RunConfig short_run;
  short_run.policy.t_end = 12.0;
  EXPECT_DOUBLE_EQ(short_run.window_lo(), 5.0);
}

TEST(Config, ParsesEveryKeyKind) {
  const auto c = parse_config_text(
      "# comment\n"
      "gamma = 1.6\n"
      "N = 128   # trailing\n"
      "family = velocity_kick\n"
      "mode = imex_be\n"
      "enforce_limits = false\n"
      "alpha_list = 0.5, 1.0\n"
      "output_dir = out/x\n");
  EXPECT_DOUBLE_EQ(c.gamma, 1.6);
  EXPECT_EQ(c.N, 128);
  EXPECT_EQ(c.perturbation.family, PerturbationFamily::velocity_kick);
  EXPECT_EQ(c.policy.mode, StepMode::imex_be);
  EXPECT_FALSE(c.policy.enforce_limits);
  EXPECT_EQ(c.alpha_list, (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(c.output_dir, "out/x");
}

TEST(Config, RejectsUnknownAndDuplicateKeys) {
  EXPECT_EQ(kind_of([] { parse_config_text("gama = 1.5\n"); }), ErrorKind::config);
  const auto dup = error_text([] { parse_config_text("gamma = 1.5\n\ngamma = 1.6\n"); });
  EXPECT_NE(dup.find(":3:"), std::string::npos) << dup;
  EXPECT_NE(dup.find("duplicate"), std::string::npos);
  EXPECT_EQ(kind_of([] { parse_config_text("gamma\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_config_text("N = 12.5\n"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_config_text("gamma = abc\n"); }), ErrorKind::config);
}

TEST(Config, ValidationMessages) {
  RunConfig c;
  c.gamma = 1.2;
  EXPECT_NE(error_text([&] { validate(c); }).find("stability range"), std::string::npos);
  c.gamma = 2.0;
  EXPECT_EQ(kind_of([&] { validate(c); }), ErrorKind::config);
  c.allow_edge = true;
  EXPECT_NO_THROW(validate(c));
  c.gamma = 1.3;
  EXPECT_NO_THROW(validate(c));
  c = RunConfig{};
  c.lambda1 = 0.0;
  EXPECT_NE(error_text([&] { validate(c); }).find("shear viscosity"), std::string::npos);
  c = RunConfig{};
  c.lambda2 = -1.0;
  EXPECT_NE(error_text([&] { validate(c); }).find("bulk viscosity"), std::string::npos);
  c = RunConfig{};
  c.N = 8;
  EXPECT_EQ(kind_of([&] { validate(c); }), ErrorKind::config);
}

TEST(Config, OverridesWinOverFile) {
  const auto dir = scratch("overrides");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "run.cfg");
    out << "gamma = 1.6\nN = 64\n";
  }
  const auto c = load_config((dir / "run.cfg").string(), {{"N", "96"}, {"epsilon", "0.02"}});
  EXPECT_DOUBLE_EQ(c.gamma, 1.6);
  EXPECT_EQ(c.N, 96);
  EXPECT_DOUBLE_EQ(c.perturbation.epsilon, 0.02);
  EXPECT_EQ(kind_of([&] { load_config((dir / "missing.cfg").string()); }), ErrorKind::config);
  EXPECT_EQ(kind_of([&] { load_config("", {{"gamma", "2.5"}}); }), ErrorKind::config);
}

TEST(Config, JsonEchoCoversEveryKey) {
  const auto j = to_json(RunConfig{});
  for (const auto& [name, info] : config_keys()) EXPECT_TRUE(j.contains(name)) << name;
  EXPECT_EQ(j["family"], "radial_dilation");
}

TEST(Config, WorkerResolution) {
  RunConfig c;
  c.workers = 3;
  EXPECT_EQ(resolve_workers(c, 8), 3);
  c.workers = 0;
  ::unsetenv("LESTAB_WORKERS");
  EXPECT_EQ(resolve_workers(c, 8), 8);
  ::setenv("LESTAB_WORKERS", "2", 1);
  EXPECT_EQ(resolve_workers(c, 8), 2);
  ::setenv("LESTAB_WORKERS", "0", 1);
  EXPECT_THROW(resolve_workers(c, 8), Error);
  ::unsetenv("LESTAB_WORKERS");
}

TEST(Io, CsvRoundTripKeepsFullPrecision) {
  const auto dir = scratch("csv");
  CsvTable t;
  t.header = {{"schema_version", kSchemaVersion}, {"gamma", 1.5}};
  t.columns = {"a", "b"};
  t.rows = {{0.1, 1.0 / 3.0}, {1e-300, -2.718281828459045}};
  write_csv(dir / "t.csv", t);
  std::ifstream in(dir / "t.csv");
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first.rfind("# {", 0), 0u);
  const auto back = read_csv(dir / "t.csv");
  EXPECT_EQ(back.columns, t.columns);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.header["schema_version"], kSchemaVersion);
  EXPECT_EQ(back.values("b")[1], -2.718281828459045);
  EXPECT_THROW(back.column("c"), Error);
}

TEST(Io, JsonlAppendsSchemaVersion) {
  const auto dir = scratch("jsonl");
  append_jsonl(dir / "m.jsonl", {{"type", "a"}});
  append_jsonl(dir / "m.jsonl", {{"type", "b"}});
  std::ifstream in(dir / "m.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["schema_version"], kSchemaVersion);
    ++n;
  }
  EXPECT_EQ(n, 2);
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ErrorKind::config), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::invalid_perturbation), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::same_mass_violation), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::domain), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::unsupported_index), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::mesh_tangling), 4);
  EXPECT_EQ(exit_code_for(ErrorKind::blow_up), 5);
  EXPECT_EQ(exit_code_for(ErrorKind::cannot_fit), 1);
  EXPECT_EQ(exit_code_for(Termination::t_end), 0);
  EXPECT_EQ(exit_code_for(Termination::mesh_tangling), 4);
  EXPECT_EQ(exit_code_for(Termination::blow_up), 5);
}

TEST(Experiment, WritesAllArtifacts) {
  const auto dir = scratch("run");
  const auto res = run_experiment(quick(dir));
  EXPECT_EQ(res.exit_code, 0) << res.message;
  for (const char* f : {"profile.csv", "timeseries.csv", "fits.json", "metadata.jsonl"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto ts = read_csv(dir / "timeseries.csv");
  EXPECT_EQ(ts.rows.size(), 41u);
  EXPECT_DOUBLE_EQ(ts.values("t").back(), 10.0);
  EXPECT_NO_THROW(ts.column("F_alpha_1"));
  const auto meta = last_metadata(dir);
  EXPECT_EQ(meta["schema_version"], kSchemaVersion);
  EXPECT_EQ(meta["exit_code"], 0);
  EXPECT_EQ(meta["config"]["N"], 100);
  std::ifstream fin(dir / "fits.json");
  const auto fits = nlohmann::json::parse(fin);
  EXPECT_TRUE(fits.contains("fits"));
  ASSERT_TRUE(res.final_record.has_value());
  EXPECT_LT(res.final_record->sup_r_minus_x, 0.01);
}

TEST(Experiment, BlowUpKeepsTrail) {
  const auto dir = scratch("blowup");
  auto c = quick(dir);
  c.perturbation.epsilon = 0.5;
  c.perturbation.max_amplitude = 1.0;
  c.policy.t_end = 2.0;
  c.policy.blowup_factor = 1e-6;
  const auto res = run_experiment(c);
  EXPECT_EQ(res.exit_code, 5);
  for (const char* f : {"profile.csv", "timeseries.csv", "fits.json", "metadata.jsonl"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_GE(read_csv(dir / "timeseries.csv").rows.size(), 2u);
  EXPECT_EQ(last_metadata(dir)["exit_code"], 5);
}

TEST(Experiment, MeshTanglingExitCode) {
  const auto dir = scratch("tangle");
  auto c = quick(dir);
  c.perturbation.epsilon = 0.5;
  c.perturbation.max_amplitude = 1.0;
  c.policy.mode = StepMode::explicit_rk4;
  c.policy.dt = 0.01;
  c.policy.enforce_limits = false;
  const auto res = run_experiment(c);
  EXPECT_EQ(res.exit_code, 4) << res.status << " " << res.message;
  EXPECT_TRUE(fs::exists(dir / "timeseries.csv"));
  EXPECT_EQ(last_metadata(dir)["exit_code"], 4);
}

TEST(Experiment, InvalidPerturbationIsConfigError) {
  const auto dir = scratch("badpert");
  auto c = quick(dir);
  c.perturbation.epsilon = 0.5;
  EXPECT_EQ(run_experiment(c).exit_code, 2);
  EXPECT_TRUE(fs::exists(dir / "metadata.jsonl"));
}

TEST(Experiment, LinearizeAndDescribe) {
  const auto dir = scratch("linearize");
  auto c = quick(dir);
  c.policy.t_end = 2.0;
  c.sample_interval = 0.01;
  const auto res = run_linearize(c);
  EXPECT_EQ(res.exit_code, 0);
  EXPECT_EQ(res.records.size(), 201u);
  EXPECT_LT(std::abs(res.energy_residual), 0.01 * res.initial_energy);
  EXPECT_EQ(last_metadata(dir)["extrapolated_viscosity"], false);
  const auto ic = describe_initial_data(c);
  EXPECT_EQ(ic.rows.size(), 101u);
  EXPECT_NO_THROW(ic.column("rx"));
}

TEST(Sweep, AxisParsing) {
  const auto a = parse_axis("gamma=1.4, 1.5,1.6");
  EXPECT_EQ(a.key, "gamma");
  EXPECT_EQ(a.values.size(), 3u);
  EXPECT_EQ(kind_of([] { parse_axis("gamma"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_axis("colour=1,2"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_axis("output_dir=a,b"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_axis("gamma="); }), ErrorKind::config);
}

TEST(Sweep, CartesianProduct) {
  const auto dir = scratch("sweep");
  auto c = quick(dir);
  c.policy.t_end = 6.0;
  const auto rep = sweep(c, {parse_axis("gamma=1.5,1.6,1.7,1.8"), parse_axis("epsilon=0.005,0.01")}, 4);
  EXPECT_EQ(rep.points.size(), 8u);
  EXPECT_EQ(rep.aggregate.rows.size(), 8u);
  EXPECT_TRUE(fs::exists(dir / "aggregate.csv"));
  const auto agg = read_csv(dir / "aggregate.csv");
  EXPECT_NO_THROW(agg.column("gamma"));
  EXPECT_NO_THROW(agg.column("epsilon"));
  EXPECT_NO_THROW(agg.column("exit_code"));
  int gamma_columns = 0;
  for (const auto& col : agg.columns) gamma_columns += (col == "gamma");
  EXPECT_EQ(gamma_columns, 1);
  for (const auto& p : rep.points) EXPECT_TRUE(fs::exists(p.directory / "metadata.jsonl"));
}

TEST(Sweep, SinglePoint) {
  const auto dir = scratch("sweep1");
  auto c = quick(dir);
  c.policy.t_end = 6.0;
  const auto rep = sweep(c, {parse_axis("N=100")}, 1);
  ASSERT_EQ(rep.points.size(), 1u);
  EXPECT_EQ(rep.points[0].exit_code, 0);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  EXPECT_EQ(run_cli("profile --gamma 1.5 --mass 10 --out " + (dir / "p.csv").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "p.csv"));
  EXPECT_EQ(run_cli("profile --gamma 1.2 --out " + (dir / "q.csv").string()), 2);
  EXPECT_EQ(run_cli("simulate --no-such-flag 1"), 2);
  EXPECT_EQ(run_cli("simulate --lambda1 0"), 2);
  EXPECT_EQ(run_cli("simulate --N 100 --total_mass 10 --t_end 6 --sample_interval 0.25 --output_dir " +
                    (dir / "sim").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "sim" / "fits.json"));
  EXPECT_EQ(run_cli("fit --in " + (dir / "sim" / "timeseries.csv").string() + " --out " +
                    (dir / "refit.json").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "refit.json"));
}

#include "invis/cli.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "support/fixtures.hpp"

using invis::CommandRequest;
using invis::Json;
using invis::run_command;

namespace {

std::string temp_path(const std::string& name) {
  return std::string(INVIS_TEST_TMP_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json load_json(const std::string& path) { return Json::parse(slurp(path)); }

int count_lines(const std::string& text) {
  int lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  return lines;
}

}  // namespace

TEST(Cli, BuildWritesReport) {
  CommandRequest req;
  req.command = "build";
  req.config = invis::default_config();
  req.out = temp_path("build_report.json");
  EXPECT_EQ(run_command(req), 0);
  const Json report = load_json(req.out);
  EXPECT_EQ(report["group_order"], 6);
  EXPECT_EQ(report["root_count"], 3);
  EXPECT_TRUE(report.contains("config_digest"));
  EXPECT_TRUE(report["geometry"]["pass"].get<bool>());
}

TEST(Cli, ReportsAreDeterministicUpToRuntime) {
  CommandRequest req;
  req.command = "build";
  req.config = invis::default_config();
  req.out = temp_path("det_a.json");
  ASSERT_EQ(run_command(req), 0);
  req.out = temp_path("det_b.json");
  ASSERT_EQ(run_command(req), 0);
  Json a = load_json(temp_path("det_a.json"));
  Json b = load_json(temp_path("det_b.json"));
  a.erase("runtime_seconds");
  b.erase("runtime_seconds");
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(Cli, FieldCsvContract) {
  CommandRequest req;
  req.command = "field";
  req.config = invis::default_config();
  req.grid = 20;
  req.out = temp_path("field.csv");
  EXPECT_EQ(run_command(req), 0);
  const std::string csv = slurp(req.out);
  EXPECT_EQ(count_lines(csv), 1 + 20 * 20);
  const std::string header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(header, "x_1,x_2,h_11,h_12,h_22,min_eig,in_ball");
}

TEST(Cli, ObstructionCsvContract) {
  CommandRequest req;
  req.command = "obstruction";
  req.config = invis::default_config();
  req.grid = 9;
  req.out = temp_path("obstruction.csv");
  EXPECT_EQ(run_command(req), 0);
  const std::string csv = slurp(req.out);
  const std::string header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(header, "x_1,x_2,k,l,obstruction");
  EXPECT_GT(count_lines(csv), 10);
}

TEST(Cli, EpsilonMaxCommand) {
  CommandRequest req;
  req.command = "epsilon-max";
  req.config = invis::default_config();
  req.grid = 7;
  req.out = temp_path("epsmax.json");
  EXPECT_EQ(run_command(req), 0);
  const Json report = load_json(req.out);
  EXPECT_GT(report["epsilon_max"].get<double>(), 0.0);
  EXPECT_EQ(report["grid_resolution"], 7);
}

TEST(Cli, TraceWritesRecordsAndPolylines) {
  CommandRequest req;
  req.command = "trace";
  req.config = invis::default_config();
  req.direction = "root:1";
  req.rays = 3;
  req.csv = temp_path("poly");
  req.out = temp_path("trace.json");
  EXPECT_EQ(run_command(req), 0);
  const Json report = load_json(req.out);
  ASSERT_EQ(report["traces"].size(), 3u);
  for (const auto& t : report["traces"]) {
    EXPECT_TRUE(t.contains("entry_line"));
    EXPECT_TRUE(t.contains("exit_line"));
    EXPECT_TRUE(t.contains("balls_crossed"));
    EXPECT_TRUE(t.contains("energy_drift"));
  }
  const std::string poly = slurp(temp_path("poly_000.csv"));
  const std::string header = poly.substr(0, poly.find('\n'));
  EXPECT_EQ(header, "t,x_1,x_2,p_1,p_2");
}

TEST(Cli, VerifyGeometrySuitePasses) {
  CommandRequest req;
  req.command = "verify";
  req.config = invis::default_config();
  req.suite = "geometry";
  req.out = temp_path("verify_geometry.json");
  EXPECT_EQ(run_command(req), 0);
  EXPECT_TRUE(load_json(req.out)["pass"].get<bool>());
}

TEST(Cli, VerifyEnergyAndSymmetrySuites) {
  CommandRequest req;
  req.command = "verify";
  req.config = invis::default_config();
  req.suite = "energy";
  req.out = temp_path("verify_energy.json");
  EXPECT_EQ(run_command(req), 0);
  req.suite = "symmetry";
  req.out = temp_path("verify_symmetry.json");
  EXPECT_EQ(run_command(req), 0);
}

// The end-to-end run: every suite on the default plane config passes and the
// report counts all six signed root directions as invisible.
TEST(Cli, VerifyAllSuitesPass) {
  CommandRequest req;
  req.command = "verify";
  req.config = invis::default_config();
  req.suite = "all";
  req.rays = 15;
  req.out = temp_path("verify_all.json");
  EXPECT_EQ(run_command(req), 0);
  const Json report = load_json(req.out);
  EXPECT_TRUE(report["pass"].get<bool>());
  EXPECT_EQ(report["suites"]["invisibility"]["invisible_directions"], 6);
  EXPECT_EQ(report["suites"]["invisibility"]["expected_directions"], 6);
  EXPECT_TRUE(report["suites"]["flatness"]["pass"].get<bool>());
  EXPECT_TRUE(report["suites"]["energy"]["pass"].get<bool>());
  EXPECT_EQ(report["config_digest"], fixtures::default_n2().digest);
}

TEST(Cli, VerifyVisibleCustomDirectionFails) {
  CommandRequest req;
  req.command = "verify";
  req.config = invis::default_config();
  req.suite = "invisibility";
  req.direction = "custom:0.92,0.39";
  req.rays = 25;
  req.out = temp_path("verify_custom.json");
  EXPECT_EQ(run_command(req), 1);
  const Json report = load_json(req.out);
  EXPECT_FALSE(report["pass"].get<bool>());
  const auto& entry = report["suites"]["invisibility"]["direction"];
  EXPECT_GT(entry["max_lateral"].get<double>(),
            entry["lateral_threshold"].get<double>());
}

TEST(Cli, VerifySingleRootDirectionPasses) {
  CommandRequest req;
  req.command = "verify";
  req.config = invis::default_config();
  req.suite = "invisibility";
  req.direction = "root:-2";
  req.rays = 15;
  req.out = temp_path("verify_root.json");
  EXPECT_EQ(run_command(req), 0);
}

TEST(Cli, InvalidConfigYieldsExitTwo) {
  CommandRequest req;
  req.command = "build";
  req.config = Json{{"n", 1}};
  req.out = temp_path("unused.json");
  EXPECT_EQ(run_command(req), 2);
  req.config = Json{{"n", 2}, {"amplitudes", {1.0, 0.4, 0.6}}};
  EXPECT_EQ(run_command(req), 2);
}

TEST(Cli, BadDirectionSpecYieldsExitTwo) {
  CommandRequest req;
  req.command = "verify";
  req.config = invis::default_config();
  req.suite = "invisibility";
  req.direction = "root:9";
  EXPECT_EQ(run_command(req), 2);
  req.direction = "custom:1.0";  // wrong component count for n = 2
  EXPECT_EQ(run_command(req), 2);
  req.direction = "sideways";
  EXPECT_EQ(run_command(req), 2);
}

TEST(Cli, UnknownSuiteRejected) {
  CommandRequest req;
  req.command = "verify";
  req.config = invis::default_config();
  req.suite = "everything";
  EXPECT_EQ(run_command(req), 2);
}

// End-to-end through the real binary: argument parsing, config file loading,
// exit codes.
TEST(Cli, BinarySmoke) {
  const std::string bin = INVIS_CLI_PATH;
  const std::string cfg = temp_path("smoke_config.json");
  {
    std::ofstream out(cfg);
    out << R"({"n": 2, "amplitudes": {"seed": 42}})";
  }
  const std::string report = temp_path("smoke_report.json");
  EXPECT_EQ(std::system((bin + " --config " + cfg +
                         " verify --suite geometry --out " + report +
                         " > /dev/null 2>&1")
                            .c_str()),
            0);
  EXPECT_TRUE(load_json(report)["pass"].get<bool>());
  // invalid config file: exit code 2
  const std::string bad = temp_path("bad_config.json");
  {
    std::ofstream out(bad);
    out << R"({"n": 1})";
  }
  const int rc = std::system(
      (bin + " --config " + bad + " build > /dev/null 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(rc), 2);
}

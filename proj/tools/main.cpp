// Command line front end: construction, export and verification of the
// invisible-direction metric family.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "invis/cli.hpp"

namespace {

invis::Json load_config(const std::string& path) {
  if (path.empty()) return invis::default_config();
  std::ifstream in(path);
  if (!in) {
    std::cerr << invis::Json{{"error", "ConfigInvalid"},
                             {"message", "cannot open config file '" + path + "'"}}
                     .dump()
              << std::endl;
    std::exit(2);
  }
  try {
    return invis::Json::parse(in);
  } catch (const invis::Json::parse_error& e) {
    std::cerr << invis::Json{{"error", "ConfigInvalid"}, {"message", e.what()}}
                     .dump()
              << std::endl;
    std::exit(2);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smooth metrics, Euclidean outside a compact obstacle, with "
               "invisible root directions: build, export and verify"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--set", sets, "config override key=value (repeatable, dotted paths)");

  invis::CommandRequest req;

  CLI::App* build = app.add_subcommand("build", "resolve the config and print the construction report");
  build->add_option("--out", req.out, "output file (stdout when omitted)");

  CLI::App* field = app.add_subcommand("field", "CSV export of H over a grid of the obstacle box");
  field->add_option("--grid", req.grid, "grid points per axis")->default_val(25);
  field->add_option("--out", req.out, "output file (stdout when omitted)");

  CLI::App* trace = app.add_subcommand("trace", "integrate geodesics and report entry/exit lines");
  trace->add_option("--direction", req.direction, "root:i or custom:c_1,...,c_n")->required();
  trace->add_option("--rays", req.rays, "number of parallel rays")->default_val(5);
  trace->add_option("--csv", req.csv, "per-trace polyline CSV prefix");
  trace->add_option("--out", req.out, "output file (stdout when omitted)");

  CLI::App* verify = app.add_subcommand("verify", "run verification suites; exit 1 on failed assertions");
  verify->add_option("--suite", req.suite,
                     "invisibility | symmetry | energy | flatness | geometry | all")
      ->default_val("all");
  verify->add_option("--direction", req.direction,
                     "restrict invisibility to one direction (root:i or custom:...)");
  verify->add_option("--rays", req.rays, "rays per direction")->default_val(100);
  verify->add_option("--out", req.out, "report file (stdout when omitted)");

  CLI::App* obstruction = app.add_subcommand("obstruction", "CSV scan of the first-order flatness obstruction");
  obstruction->add_option("--grid", req.grid, "grid points per axis")->default_val(21);
  obstruction->add_option("--pair", req.pair, "restrict to one pair k,l (1-based)");
  obstruction->add_option("--out", req.out, "output file (stdout when omitted)");

  CLI::App* epsmax = app.add_subcommand("epsilon-max", "bisect the largest admissible epsilon");
  epsmax->add_option("--grid", req.grid, "grid points per axis over the base ball")->default_val(9);
  epsmax->add_option("--out", req.out, "output file (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  for (CLI::App* sub : {build, field, trace, verify, obstruction, epsmax})
    if (sub->parsed()) req.command = sub->get_name();
  req.config = load_config(config_path);
  req.sets = sets;
  return invis::run_command(req);
}

#pragma once

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "invis/config.hpp"
#include "invis/verify.hpp"

namespace invis {

// Suite-level constants pinned by the verification contract.
constexpr int kEnergyGridPoints = 10000;
constexpr double kEnergyResidualMax = 1e-10;
constexpr int kSymmetrySamples = 1000;
constexpr double kSymmetryResidualMax = 1e-10;
constexpr double kControlAngle = 0.3;          // radians off the first root
constexpr double kControlLateralMin = 1e-4;    // in units of the ball radius
constexpr double kCurvatureNoiseMax = 1e-6;    // flat-limit finite-difference floor
constexpr int kObstructionGrid = 21;
constexpr double kObstructionMin = 1e-6;

struct CommandRequest {
  std::string command;  // build | field | trace | verify | obstruction | epsilon-max
  Json config = Json::object();
  std::vector<std::string> sets;  // key=value overrides
  std::string out;                // output path; empty writes to stdout
  std::string suite = "all";
  std::string direction;  // "root:3", "root:-3", "custom:0.9,0.4", or empty
  int rays = 100;
  int grid = 25;
  std::string csv;   // polyline csv prefix for `trace`
  std::string pair;  // "k,l" filter for `obstruction`, 1-based
};

// "root:i" with i in 1..N (negative for the opposite direction) in the fixed
// root ordering, or "custom:c_1,...,c_n".
inline Vec parse_direction(const Setup& setup, const std::string& spec) {
  if (spec.rfind("root:", 0) == 0) {
    int i = 0;
    try {
      i = std::stoi(spec.substr(5));
    } catch (const std::exception&) {
      throw ConfigInvalid("direction '" + spec + "' is not root:i");
    }
    const int mag = std::abs(i);
    if (mag < 1 || mag > setup.rs.N)
      throw ConfigInvalid("root index in '" + spec + "' must be in 1.." +
                          std::to_string(setup.rs.N));
    Vec v = setup.rs.roots[static_cast<std::size_t>(mag - 1)];
    return i < 0 ? Vec(-v) : v;
  }
  if (spec.rfind("custom:", 0) == 0) {
    std::stringstream ss(spec.substr(7));
    std::vector<double> comps;
    std::string tok;
    while (std::getline(ss, tok, ','))
      try {
        comps.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ConfigInvalid("direction '" + spec + "' has a bad component");
      }
    if (static_cast<int>(comps.size()) != setup.rs.n)
      throw ConfigInvalid("direction '" + spec + "' needs exactly " +
                          std::to_string(setup.rs.n) + " components");
    Vec v = Eigen::Map<Vec>(comps.data(), static_cast<Eigen::Index>(comps.size()));
    if (!(v.norm() > 0.0))
      throw ConfigInvalid("direction '" + spec + "' is the zero vector");
    return v;
  }
  throw ConfigInvalid("direction '" + spec +
                      "' must be root:i or custom:c_1,...,c_n");
}

namespace detail {

inline Json vec_json(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Json line_json(const LineSpec& line) {
  return Json{{"point", vec_json(line.point)},
              {"direction", vec_json(line.direction)}};
}

inline Json invisibility_json(const InvisibilityReport& rep) {
  return Json{{"direction", vec_json(rep.direction)},
              {"rays", rep.rays},
              {"hits", rep.hits},
              {"max_lateral", rep.max_lateral},
              {"max_angular", rep.max_angular},
              {"max_energy_drift", rep.max_energy_drift},
              {"max_time_delay", rep.max_time_delay},
              {"root", rep.root},
              {"crossings_paired", rep.crossings_paired},
              {"max_balls_crossed", rep.max_balls_crossed}};
}

inline Json geometry_json(const GeometryReport& g) {
  return Json{{"pass", g.pass()},
              {"pairing_ok", g.pairing_ok},
              {"balls_disjoint", g.balls_disjoint},
              {"capsules_disjoint", g.capsules_disjoint},
              {"no_collinear_triple", g.no_collinear_triple},
              {"min_ball_gap", g.min_ball_gap},
              {"min_capsule_gap", g.min_capsule_gap},
              {"min_line_residual", g.min_line_residual}};
}

inline void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    if (text.empty() || text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigInvalid("cannot open output file '" + path + "'");
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Verification suites
// ---------------------------------------------------------------------------

inline Json run_geometry_suite(const Setup& setup) {
  Json j = detail::geometry_json(setup.geometry);
  return j;
}

inline Json run_energy_suite(const Setup& setup) {
  const EnergyLevelReport rep =
      verify_energy_level(setup.field, kEnergyGridPoints);
  const bool pass = rep.max_residual <= kEnergyResidualMax;
  return Json{{"pass", pass},
              {"points", rep.points},
              {"max_residual", rep.max_residual},
              {"threshold", kEnergyResidualMax}};
}

inline Json run_symmetry_suite(const Setup& setup) {
  const SymmetryReport rep = verify_symmetry(setup.field, kSymmetrySamples);
  const bool pass = rep.max_residual <= kSymmetryResidualMax;
  return Json{{"pass", pass},
              {"samples", rep.samples},
              {"max_residual", rep.max_residual},
              {"threshold", kSymmetryResidualMax}};
}

// Asserts invisibility of one direction at the configured thresholds.
inline Json assert_invisible(const Setup& setup, const Vec& direction,
                             int rays, bool require_hits) {
  const InvisibilityReport rep = verify_invisibility(
      setup.field, direction, rays, setup.integrator.rel_tol);
  const double lateral_max = setup.thresholds.lateral * setup.field.radius();
  bool pass = rep.max_lateral <= lateral_max &&
              rep.max_angular <= setup.thresholds.angular &&
              rep.max_energy_drift <= setup.thresholds.energy_drift &&
              rep.crossings_paired;
  if (require_hits && rep.hits == 0) pass = false;
  Json j = detail::invisibility_json(rep);
  j["lateral_threshold"] = lateral_max;
  j["angular_threshold"] = setup.thresholds.angular;
  j["pass"] = pass;
  return j;
}

inline Json run_invisibility_suite(const Setup& setup,
                                   const std::string& direction_spec,
                                   int rays) {
  Json suite;
  if (!setup.geometry.pass()) {
    suite["pass"] = false;
    suite["error"] =
        "obstacle geometry violates the smallness conditions; invisibility "
        "is only claimed when they hold";
    return suite;
  }
  bool pass = true;
  if (!direction_spec.empty()) {
    const Vec dir = parse_direction(setup, direction_spec);
    Json entry = assert_invisible(setup, dir, rays, false);
    pass = entry["pass"].get<bool>();
    suite["direction"] = std::move(entry);
  } else {
    Json dirs = Json::array();
    int invisible = 0;
    for (int i = 0; i < setup.rs.N; ++i)
      for (int sign : {+1, -1}) {
        const Vec dir =
            sign * setup.rs.roots[static_cast<std::size_t>(i)];
        Json entry = assert_invisible(setup, dir, rays, true);
        entry["root"] = (i + 1) * sign;
        if (entry["pass"].get<bool>())
          ++invisible;
        else
          pass = false;
        dirs.push_back(std::move(entry));
      }
    suite["directions"] = std::move(dirs);
    suite["invisible_directions"] = invisible;
    suite["expected_directions"] = 2 * setup.rs.N;

    // Control: a direction off every root must scatter measurably, otherwise
    // the run proves nothing.
    const Vec control =
        rotate_toward_complement(setup.rs.roots[0], kControlAngle);
    const InvisibilityReport rep = verify_invisibility(
        setup.field, control, rays, setup.integrator.rel_tol);
    const double control_min = kControlLateralMin * setup.field.radius();
    const bool control_pass = rep.max_lateral >= control_min;
    Json control_json = detail::invisibility_json(rep);
    control_json["lateral_floor"] = control_min;
    control_json["pass"] = control_pass;
    suite["control"] = std::move(control_json);
    pass = pass && control_pass;
  }
  suite["pass"] = pass;
  return suite;
}

inline Json run_flatness_suite(const Setup& setup) {
  const ObstructionScan scan =
      scan_flatness_obstruction(setup.field, kObstructionGrid);
  const bool obstructed = scan.max_abs > kObstructionMin;

  const double rho = setup.field.radius();
  const Vec probe = setup.bumps.center + 0.3 * rho * setup.rs.roots[0].normalized();
  const double fd = 1e-3 * rho;
  const CurvatureSample sample = curvature(setup.field, probe, fd);
  HamiltonianField flat = setup.field;
  flat.epsilon = 0.0;
  const CurvatureSample noise = curvature(flat, probe, fd);

  const double floor = std::max(noise.max_riemann, 1e-300);
  const double ratio = sample.max_riemann / floor;
  bool pass = noise.max_riemann <= kCurvatureNoiseMax;
  // Non-flatness is only claimed when some obstruction is nonzero.
  if (obstructed)
    pass = pass && ratio >= setup.thresholds.curvature_floor_ratio;

  return Json{{"pass", pass},
              {"obstruction_max", scan.max_abs},
              {"obstruction_pair", Json::array({scan.k + 1, scan.l + 1})},
              {"obstruction_floor", kObstructionMin},
              {"obstructed", obstructed},
              {"probe", detail::vec_json(probe)},
              {"fd_step", fd},
              {"max_riemann", sample.max_riemann},
              {"scalar_curvature", sample.scalar},
              {"flat_max_riemann", noise.max_riemann},
              {"flat_noise_threshold", kCurvatureNoiseMax},
              {"curvature_ratio", ratio},
              {"ratio_threshold", setup.thresholds.curvature_floor_ratio}};
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

inline void write_field_csv(const Setup& setup, int grid, std::ostream& out) {
  const int n = setup.rs.n;
  const double box = setup.field.obstacle_radius();
  out << "x_1";
  for (int d = 1; d < n; ++d) out << ",x_" << (d + 1);
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) out << ",h_" << (a + 1) << (b + 1);
  out << ",min_eig,in_ball\n";

  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (;;) {
    Vec x(n);
    for (int d = 0; d < n; ++d)
      x[d] = grid == 1 ? 0.0
                       : -box + 2.0 * box * idx[static_cast<std::size_t>(d)] /
                                    (grid - 1.0);
    const auto [H, report] = solve_H(setup.field, x);
    for (int d = 0; d < n; ++d) out << (d ? "," : "") << fmt17(x[d]);
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) out << ',' << fmt17(H(a, b));
    out << ',' << fmt17(report.min_eigenvalue) << ','
        << setup.field.ball_index(x) << '\n';
    int d = 0;
    while (d < n && ++idx[static_cast<std::size_t>(d)] == grid) {
      idx[static_cast<std::size_t>(d)] = 0;
      ++d;
    }
    if (d == n) break;
  }
}

inline void write_obstruction_csv(const Setup& setup, int grid,
                                  std::optional<std::pair<int, int>> only_pair,
                                  std::ostream& out) {
  const int n = setup.rs.n;
  out << "x_1";
  for (int d = 1; d < n; ++d) out << ",x_" << (d + 1);
  out << ",k,l,obstruction\n";
  const std::vector<Vec> points =
      detail::ball_grid(setup.bumps.center, setup.bumps.radius, grid);
  for (const Vec& x : points)
    for (int k = 0; k < n; ++k)
      for (int l = k + 1; l < n; ++l) {
        if (only_pair && (only_pair->first != k + 1 || only_pair->second != l + 1))
          continue;
        out << fmt17(x[0]);
        for (int d = 1; d < n; ++d) out << ',' << fmt17(x[d]);
        out << ',' << (k + 1) << ',' << (l + 1) << ','
            << fmt17(flatness_obstruction(setup.field, k, l, x)) << '\n';
      }
}

inline void write_polyline_csv(const TraceResult& trace, std::ostream& out) {
  if (trace.polyline.empty()) return;
  const auto n = trace.polyline.front().x.size();
  out << "t";
  for (Eigen::Index d = 0; d < n; ++d) out << ",x_" << (d + 1);
  for (Eigen::Index d = 0; d < n; ++d) out << ",p_" << (d + 1);
  out << '\n';
  for (const TraceSample& s : trace.polyline) {
    out << fmt17(s.t);
    for (Eigen::Index d = 0; d < n; ++d) out << ',' << fmt17(s.x[d]);
    for (Eigen::Index d = 0; d < n; ++d) out << ',' << fmt17(s.p[d]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Command dispatch
// ---------------------------------------------------------------------------

namespace detail {

inline int dispatch(const CommandRequest& req) {
  const auto started = std::chrono::steady_clock::now();
  const Json config = apply_overrides(req.config, req.sets);
  Setup setup = resolve_config(config);
  auto seconds_since_start = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         started)
        .count();
  };

  if (req.command == "build") {
    Json report = setup.report;
    report["runtime_seconds"] = seconds_since_start();
    detail::write_text(req.out, report.dump(2));
    return 0;
  }

  if (req.command == "field") {
    if (req.grid < 1) throw ConfigInvalid("--grid must be at least 1");
    std::ostringstream csv;
    write_field_csv(setup, req.grid, csv);
    detail::write_text(req.out, csv.str());
    return 0;
  }

  if (req.command == "obstruction") {
    if (req.grid < 2) throw ConfigInvalid("--grid must be at least 2");
    std::optional<std::pair<int, int>> only;
    if (!req.pair.empty()) {
      int k = 0, l = 0;
      if (std::sscanf(req.pair.c_str(), "%d,%d", &k, &l) != 2 || k < 1 ||
          l <= k || l > setup.rs.n)
        throw ConfigInvalid("--pair must be k,l with 1 <= k < l <= n");
      only = {k, l};
    }
    std::ostringstream csv;
    write_obstruction_csv(setup, req.grid, only, csv);
    detail::write_text(req.out, csv.str());
    return 0;
  }

  if (req.command == "epsilon-max") {
    const int grid = req.grid >= 2 ? req.grid : 9;
    const double eps_max = max_admissible_epsilon(setup.rs, setup.bumps, grid);
    Json report{{"config_digest", setup.digest},
                {"grid_resolution", grid},
                {"epsilon_max", eps_max},
                {"runtime_seconds", seconds_since_start()}};
    detail::write_text(req.out, report.dump(2));
    return 0;
  }

  if (req.command == "trace") {
    if (req.direction.empty())
      throw ConfigInvalid("trace requires --direction");
    const Vec dir = parse_direction(setup, req.direction);
    const Vec d = dir.normalized();
    const RootMatch root = match_root(setup.rs, dir);
    const Vec p0 =
        root.index >= 0
            ? Vec(root.sign *
                  setup.rs.roots[static_cast<std::size_t>(root.index)])
            : Vec(std::sqrt(2.0) * d);
    const double obstacle = setup.field.obstacle_radius();
    const double launch = obstacle + 1.0;
    const double bounding =
        std::sqrt(obstacle * obstacle + launch * launch) + 1.0;
    const std::vector<Vec> basis = transverse_basis(d);

    std::vector<Vec> offsets;
    if (req.rays <= 1) {
      offsets.push_back(Vec::Zero(setup.rs.n));
    } else {
      for (int i = 0; i < req.rays; ++i) {
        Vec o = Vec::Zero(setup.rs.n);
        o += (-obstacle + 2.0 * obstacle * i / (req.rays - 1.0)) * basis[0];
        offsets.push_back(std::move(o));
      }
    }

    Json traces = Json::array();
    std::vector<std::string> csv_files;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      GeodesicState s0;
      s0.x = offsets[i] - launch * d;
      s0.p = p0;
      const TraceResult trace =
          integrate(setup.field, s0, bounding, setup.integrator);
      Json t{{"entry_line", detail::line_json(trace.entry_line)},
             {"exit_line", detail::line_json(trace.exit_line)},
             {"lateral", lateral_deviation(trace.entry_line, trace.exit_line)},
             {"angular", angular_deviation(trace.entry_line.direction,
                                           trace.exit_line.direction)},
             {"time_delay", trace.time_delay},
             {"energy_drift", trace.energy_drift},
             {"balls_crossed", trace.balls_crossed},
             {"samples", trace.polyline.size()}};
      Json crossings = Json::array();
      for (const BallCrossing& c : trace.crossings)
        crossings.push_back(Json{{"ball", c.ball},
                                 {"t_entry", c.t_entry},
                                 {"x_entry", detail::vec_json(c.x_entry)},
                                 {"t_exit", c.t_exit},
                                 {"x_exit", detail::vec_json(c.x_exit)}});
      t["crossings"] = std::move(crossings);
      if (!req.csv.empty()) {
        char name[640];
        std::snprintf(name, sizeof(name), "%s_%03zu.csv", req.csv.c_str(), i);
        std::ofstream file(name);
        if (!file) throw ConfigInvalid(std::string("cannot open '") + name + "'");
        write_polyline_csv(trace, file);
        csv_files.emplace_back(name);
        t["csv"] = name;
      }
      traces.push_back(std::move(t));
    }
    Json report{{"config_digest", setup.digest},
                {"direction", detail::vec_json(dir)},
                {"traces", std::move(traces)},
                {"runtime_seconds", seconds_since_start()}};
    detail::write_text(req.out, report.dump(2));
    return 0;
  }

  if (req.command == "verify") {
    const std::string& which = req.suite;
    const bool all = which == "all";
    if (!all && which != "invisibility" && which != "symmetry" &&
        which != "energy" && which != "flatness" && which != "geometry")
      throw ConfigInvalid("unknown suite '" + which + "'");
    Json suites;
    bool pass = true;
    auto add = [&](const std::string& name, Json suite) {
      pass = pass && suite["pass"].get<bool>();
      suites[name] = std::move(suite);
    };
    if (all || which == "geometry") add("geometry", run_geometry_suite(setup));
    if (all || which == "energy") add("energy", run_energy_suite(setup));
    if (all || which == "symmetry") add("symmetry", run_symmetry_suite(setup));
    if (all || which == "invisibility")
      add("invisibility",
          run_invisibility_suite(setup, req.direction, req.rays));
    if (all || which == "flatness") add("flatness", run_flatness_suite(setup));
    Json report{{"config_digest", setup.digest},
                {"pass", pass},
                {"suites", std::move(suites)},
                {"runtime_seconds", seconds_since_start()}};
    detail::write_text(req.out, report.dump(2));
    return pass ? 0 : 1;
  }

  throw ConfigInvalid("unknown command '" + req.command + "'");
}

inline int fail(const char* kind, const std::string& message, int code) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << std::endl;
  return code;
}

}  // namespace detail

// Runs one command against a raw config.  Exit codes: 0 all assertions pass,
// 1 a verification assertion failed, 2 invalid config or IO or an infeasible
// numerical request.
inline int run_command(const CommandRequest& req) {
  try {
    return detail::dispatch(req);
  } catch (const ConfigInvalid& e) {
    return detail::fail("ConfigInvalid", e.what(), 2);
  } catch (const AmplitudeDegenerate& e) {
    return detail::fail("AmplitudeDegenerate", e.what(), 2);
  } catch (const GeometryInvalid& e) {
    return detail::fail("GeometryInvalid", e.what(), 2);
  } catch (const SingularSystem& e) {
    return detail::fail("SingularSystem", e.what(), 2);
  } catch (const NotPositiveDefinite& e) {
    return detail::fail("NotPositiveDefinite", e.what(), 2);
  } catch (const ThresholdNotFound& e) {
    return detail::fail("ThresholdNotFound", e.what(), 2);
  } catch (const StepFailure& e) {
    return detail::fail("StepFailure", e.what(), 2);
  } catch (const EscapeFailure& e) {
    return detail::fail("EscapeFailure", e.what(), 2);
  } catch (const Json::exception& e) {
    return detail::fail("ConfigInvalid", e.what(), 2);
  } catch (const std::exception& e) {
    return detail::fail("Error", e.what(), 2);
  }
}

}  // namespace invis

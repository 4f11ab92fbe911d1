#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "invis/bumps.hpp"
#include "invis/common.hpp"
#include "invis/geodesic.hpp"
#include "invis/metricfield.hpp"
#include "invis/rootsys.hpp"

namespace invis {

using Json = nlohmann::json;

struct Thresholds {
  double lateral = 1e-6;  // in units of the ball radius
  double angular = 1e-8;  // radians
  double energy_drift = 1e-9;
  double curvature_floor_ratio = 10.0;
};

// A fully resolved configuration together with everything built from it.
struct Setup {
  Json resolved;
  std::string digest;
  RootSystem rs;
  WeylGroup group;
  BumpSet bumps;
  HamiltonianField field;
  IntegratorOptions integrator;
  Thresholds thresholds;
  double epsilon_max = std::numeric_limits<double>::quiet_NaN();
  GeometryReport geometry;
  Json report;
};

inline Json default_config() {
  return Json{
      {"n", 2},
      {"epsilon", "auto"},
      {"ball_radius", "auto"},
      {"chamber_point", "auto"},
      {"amplitudes", Json{{"seed", 42}}},
      {"profile", "mollifier"},
      {"integrator",
       Json{{"rel_tol", 1e-12}, {"abs_tol", 1e-12}, {"max_param", 1000.0}}},
      {"thresholds", Json{{"lateral", 1e-6},
                          {"angular", 1e-8},
                          {"energy_drift", 1e-9},
                          {"curvature_floor_ratio", 10.0}}},
  };
}

namespace detail {

inline void merge_section(Json& base, const Json& over, const std::string& where) {
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (!base.contains(it.key()))
      throw ConfigInvalid("unknown config key '" + where + it.key() + "'");
    if (base[it.key()].is_object() && it.value().is_object())
      merge_section(base[it.key()], it.value(), where + it.key() + ".");
    else
      base[it.key()] = it.value();
  }
}

inline double positive_number(const Json& j, const std::string& key) {
  if (!j.is_number() || !(j.get<double>() > 0.0))
    throw ConfigInvalid("config field '" + key + "' must be a positive number");
  return j.get<double>();
}

}  // namespace detail

// Dotted-path overrides of the form "integrator.rel_tol=1e-10".  Values are
// parsed as JSON when possible and fall back to strings.
inline Json apply_overrides(Json config, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigInvalid("override '" + s + "' is not of the form key=value");
    const std::string path = s.substr(0, eq);
    const std::string raw = s.substr(eq + 1);
    Json value;
    try {
      value = Json::parse(raw);
    } catch (const Json::parse_error&) {
      value = raw;
    }
    Json* node = &config;
    std::size_t begin = 0;
    for (;;) {
      const auto dot = path.find('.', begin);
      const std::string key = path.substr(begin, dot - begin);
      if (key.empty())
        throw ConfigInvalid("override '" + s + "' has an empty path segment");
      if (dot == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      node = &(*node)[key];
      begin = dot + 1;
    }
  }
  return config;
}

// Resolves every "auto" field, validates the amplitude constraint, builds the
// root system, group, bumps and global field, and assembles a construction
// report.  Resolution order: chamber point, then ball radius, then epsilon;
// each depends on the previous.
inline Setup resolve_config(const Json& raw) {
  if (!raw.is_object()) throw ConfigInvalid("config must be a JSON object");
  Json cfg = default_config();
  detail::merge_section(cfg, raw, "");

  if (!cfg["n"].is_number_integer() || cfg["n"].get<int>() < 2)
    throw ConfigInvalid("config field 'n' must be an integer >= 2");
  const int n = cfg["n"].get<int>();

  if (cfg["profile"] != "mollifier")
    throw ConfigInvalid("config field 'profile' must be \"mollifier\"");

  Setup setup;
  setup.rs = build_roots(n);
  setup.group = build_weyl_group(setup.rs);
  const int N = setup.rs.N;

  // chamber point
  if (cfg["chamber_point"].is_string() && cfg["chamber_point"] == "auto") {
    // keep the default orbit
  } else if (cfg["chamber_point"].is_array() &&
             static_cast<int>(cfg["chamber_point"].size()) == n) {
    Vec w(n);
    for (int i = 0; i < n; ++i) {
      if (!cfg["chamber_point"][static_cast<std::size_t>(i)].is_number())
        throw ConfigInvalid("config field 'chamber_point' must hold numbers");
      w[i] = cfg["chamber_point"][static_cast<std::size_t>(i)].get<double>();
    }
    for (int i = 0; i < N; ++i)
      if (!(w.dot(setup.rs.roots[static_cast<std::size_t>(i)]) > 0.0))
        throw ConfigInvalid(
            "config field 'chamber_point' is not strictly inside the "
            "fundamental chamber (non-positive pairing with root " +
            std::to_string(i + 1) + ")");
    setup.group.chamber_point = w;
    setup.group.centers = orbit(setup.group.elements, w);
  } else {
    throw ConfigInvalid(
        "config field 'chamber_point' must be \"auto\" or an array of n numbers");
  }

  // amplitudes
  std::vector<double> amplitudes;
  if (cfg["amplitudes"].is_object()) {
    if (!cfg["amplitudes"].contains("seed") ||
        !cfg["amplitudes"]["seed"].is_number_integer())
      throw ConfigInvalid(
          "config field 'amplitudes' must be an array of N reals or {\"seed\": int}");
    DeterministicRng rng(cfg["amplitudes"]["seed"].get<std::uint64_t>());
    for (int i = 0; i < N; ++i) amplitudes.push_back(rng.range(0.5, 1.5));
  } else if (cfg["amplitudes"].is_array()) {
    if (static_cast<int>(cfg["amplitudes"].size()) != N)
      throw ConfigInvalid("config field 'amplitudes' must hold exactly " +
                          std::to_string(N) + " values for n = " +
                          std::to_string(n));
    for (const auto& a : cfg["amplitudes"]) {
      if (!a.is_number())
        throw ConfigInvalid("config field 'amplitudes' must hold numbers");
      amplitudes.push_back(a.get<double>());
    }
  } else {
    throw ConfigInvalid(
        "config field 'amplitudes' must be an array of N reals or {\"seed\": int}");
  }
  // Non-flatness needs a_kl != a_k - a_l for every pair; with the shared
  // radial profile a violated pair makes the obstruction vanish identically.
  for (int k = 0; k < n; ++k)
    for (int l = k + 1; l < n; ++l) {
      const double gap =
          amplitudes[static_cast<std::size_t>(setup.rs.pair_index(k, l))] -
          (amplitudes[static_cast<std::size_t>(k)] -
           amplitudes[static_cast<std::size_t>(l)]);
      if (std::abs(gap) <= 1e-9)
        throw AmplitudeDegenerate(
            "amplitude constraint violated: a_" + std::to_string(k + 1) + "," +
            std::to_string(l + 1) + " equals a_" + std::to_string(k + 1) +
            " - a_" + std::to_string(l + 1) + " within 1e-9");
    }

  // ball radius
  double radius;
  if (cfg["ball_radius"].is_string() && cfg["ball_radius"] == "auto")
    radius = auto_ball_radius(setup.rs, setup.group.centers);
  else if (cfg["ball_radius"].is_number() &&
           cfg["ball_radius"].get<double>() > 0.0)
    radius = cfg["ball_radius"].get<double>();
  else
    throw ConfigInvalid(
        "config field 'ball_radius' must be \"auto\" or a positive number");

  setup.bumps.center = setup.group.chamber_point;
  setup.bumps.radius = radius;
  setup.bumps.amplitudes = amplitudes;
  setup.bumps.profile = "mollifier";

  // epsilon
  double epsilon;
  if (cfg["epsilon"].is_string() && cfg["epsilon"] == "auto") {
    setup.epsilon_max = max_admissible_epsilon(setup.rs, setup.bumps, 9);
    epsilon = 0.5 * setup.epsilon_max;
  } else if (cfg["epsilon"].is_number() && cfg["epsilon"].get<double>() >= 0.0) {
    epsilon = cfg["epsilon"].get<double>();
  } else {
    throw ConfigInvalid(
        "config field 'epsilon' must be \"auto\" or a number >= 0");
  }

  setup.integrator.rel_tol =
      detail::positive_number(cfg["integrator"]["rel_tol"], "integrator.rel_tol");
  setup.integrator.abs_tol =
      detail::positive_number(cfg["integrator"]["abs_tol"], "integrator.abs_tol");
  setup.integrator.max_param =
      detail::positive_number(cfg["integrator"]["max_param"], "integrator.max_param");
  setup.thresholds.lateral =
      detail::positive_number(cfg["thresholds"]["lateral"], "thresholds.lateral");
  setup.thresholds.angular =
      detail::positive_number(cfg["thresholds"]["angular"], "thresholds.angular");
  setup.thresholds.energy_drift = detail::positive_number(
      cfg["thresholds"]["energy_drift"], "thresholds.energy_drift");
  setup.thresholds.curvature_floor_ratio =
      detail::positive_number(cfg["thresholds"]["curvature_floor_ratio"],
                              "thresholds.curvature_floor_ratio");

  setup.field = symmetrized_field(setup.rs, setup.bumps, epsilon, setup.group);
  setup.geometry = validate_geometry(setup.field);

  // resolved config: every auto replaced by its concrete value
  Json resolved = cfg;
  resolved["epsilon"] = epsilon;
  resolved["ball_radius"] = radius;
  resolved["chamber_point"] = std::vector<double>(
      setup.group.chamber_point.data(),
      setup.group.chamber_point.data() + setup.group.chamber_point.size());
  resolved["amplitudes"] = amplitudes;
  setup.resolved = resolved;
  setup.digest = fnv1a64_hex(resolved.dump());

  Json centers = Json::array();
  for (const Vec& c : setup.group.centers)
    centers.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  Json geometry = {
      {"pass", setup.geometry.pass()},
      {"pairing_ok", setup.geometry.pairing_ok},
      {"balls_disjoint", setup.geometry.balls_disjoint},
      {"capsules_disjoint", setup.geometry.capsules_disjoint},
      {"no_collinear_triple", setup.geometry.no_collinear_triple},
      {"min_ball_gap", setup.geometry.min_ball_gap},
      {"min_capsule_gap", setup.geometry.min_capsule_gap},
      {"min_line_residual", setup.geometry.min_line_residual},
  };
  // condition number of the unperturbed system depends only on n
  const HamiltonianField flat = single_ball_field(setup.rs, setup.bumps, 0.0);
  const double flat_cond =
      solve_H(flat, setup.bumps.center).second.condition_number;
  // representative conditioning at the resolved epsilon, off center where
  // the perturbation is active
  const HamiltonianField base =
      single_ball_field(setup.rs, setup.bumps, epsilon);
  const Vec probe =
      setup.bumps.center +
      0.5 * setup.bumps.radius * setup.rs.roots[0].normalized();
  const double probe_cond = solve_H(base, probe).second.condition_number;

  setup.report = Json{
      {"config", resolved},
      {"config_digest", setup.digest},
      {"dimension", n},
      {"root_count", N},
      {"group_order", setup.group.elements.size()},
      {"ball_radius", radius},
      {"epsilon", epsilon},
      {"centers", centers},
      {"geometry", geometry},
      {"flat_condition_number", flat_cond},
      {"condition_number_at_epsilon", probe_cond},
      {"bump_grad_bound", setup.bumps.grad_bound()},
      {"bump_hess_bound", setup.bumps.hess_bound()},
  };
  if (std::isfinite(setup.epsilon_max))
    setup.report["epsilon_max"] = setup.epsilon_max;
  return setup;
}

}  // namespace invis

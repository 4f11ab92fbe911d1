#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "invis/common.hpp"
#include "invis/geodesic.hpp"
#include "invis/metricfield.hpp"
#include "invis/rootsys.hpp"

namespace invis {

// ---------------------------------------------------------------------------
// Deviation metrics
// ---------------------------------------------------------------------------

// Angle between two unit directions, stable near 0 and pi.
inline double angular_deviation(const Vec& u, const Vec& w) {
  return 2.0 * std::atan2((w - u).norm(), (w + u).norm());
}

// Distance between the entry line and the outgoing ray.  For (near-)parallel
// lines this is the perpendicular offset of the exit point from the entry
// line; otherwise the closest-point distance, restricted to the forward ray
// so that a crossing behind the exit point does not mask a visible deflection.
inline double lateral_deviation(const LineSpec& entry, const LineSpec& exit) {
  const Vec delta = exit.point - entry.point;
  const double perp = (delta - delta.dot(entry.direction) * entry.direction).norm();
  const double c = entry.direction.dot(exit.direction);
  const double det = 1.0 - c * c;
  if (det < 1e-14) return perp;
  const double du = delta.dot(entry.direction);
  const double dw = delta.dot(exit.direction);
  const double s = (c * du - dw) / det;
  if (s < 0.0) return perp;
  const double t = du + s * c;
  return (entry.point + t * entry.direction - (exit.point + s * exit.direction))
      .norm();
}

// ---------------------------------------------------------------------------
// Direction utilities
// ---------------------------------------------------------------------------

// Deterministic orthonormal basis of the hyperplane orthogonal to u
// (Gram-Schmidt over the coordinate axes).
inline std::vector<Vec> transverse_basis(const Vec& u) {
  const int n = static_cast<int>(u.size());
  std::vector<Vec> basis;
  basis.push_back(u.normalized());
  for (int j = 0; j < n && static_cast<int>(basis.size()) < n; ++j) {
    Vec e = Vec::Zero(n);
    e[j] = 1.0;
    for (const Vec& b : basis) e -= e.dot(b) * b;
    const double norm = e.norm();
    if (norm > 1e-8) basis.push_back(e / norm);
  }
  basis.erase(basis.begin());
  return basis;
}

// Rotate v by the given angle toward a deterministic orthogonal direction;
// used to produce non-root control directions.
inline Vec rotate_toward_complement(const Vec& v, double angle) {
  const Vec u = v.normalized();
  const Vec w = transverse_basis(u).front();
  return v.norm() * (std::cos(angle) * u + std::sin(angle) * w);
}

// Signed root matching: returns (index, sign) when the direction is parallel
// to a root, {-1, 0} otherwise.
struct RootMatch {
  int index = -1;
  int sign = 0;
};

inline RootMatch match_root(const RootSystem& rs, const Vec& direction) {
  const Vec d = direction.normalized();
  for (int i = 0; i < rs.N; ++i) {
    const Vec r = rs.roots[static_cast<std::size_t>(i)].normalized();
    if ((d - r).norm() < 1e-12) return {i, +1};
    if ((d + r).norm() < 1e-12) return {i, -1};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Invisibility
// ---------------------------------------------------------------------------

struct InvisibilityReport {
  Vec direction;
  int rays = 0;
  int hits = 0;  // rays that crossed at least one ball
  double max_lateral = 0.0;
  double max_angular = 0.0;
  double max_energy_drift = 0.0;
  double max_time_delay = 0.0;
  int root = -1;  // matched root index, -1 for generic directions
  // For root directions: every ray crossed either no ball or exactly the two
  // balls of one mirror pair.
  bool crossings_paired = true;
  int max_balls_crossed = 0;
};

// Shoots ray_count parallel geodesics in the given direction, offsets on a
// grid of the transverse hyperplane covering the obstacle, and records the
// worst deviation between entry and exit lines.
inline InvisibilityReport verify_invisibility(const HamiltonianField& hf,
                                              const Vec& direction,
                                              int ray_count, double tol) {
  if (!(direction.norm() > 0.0))
    throw std::invalid_argument("direction must be nonzero");
  if (!validate_geometry(hf).pass())
    throw GeometryInvalid(
        "obstacle geometry violates the smallness conditions; invisibility "
        "is only claimed when they hold");

  const int n = hf.rs.n;
  const Vec d = direction.normalized();
  const RootMatch root = match_root(hf.rs, direction);
  // Root rays carry the root itself as momentum so they start on the
  // invariant section; generic rays use the same energy level.
  const Vec p0 = root.index >= 0
                     ? Vec(root.sign * hf.rs.roots[static_cast<std::size_t>(root.index)])
                     : Vec(std::sqrt(2.0) * d);

  const double obstacle = hf.obstacle_radius();
  const double launch = obstacle + 1.0;
  const double bounding = std::sqrt(obstacle * obstacle + launch * launch) + 1.0;
  const std::vector<Vec> basis = transverse_basis(d);

  int per_axis = 1;
  if (ray_count > 1) {
    per_axis = 2;
    auto total = [&](int m) {
      long t = 1;
      for (int k = 0; k + 1 < n; ++k) t *= m;
      return t;
    };
    while (total(per_axis) < ray_count) ++per_axis;
  }
  std::vector<Vec> offsets;
  std::vector<int> idx(static_cast<std::size_t>(n - 1), 0);
  for (;;) {
    Vec o = Vec::Zero(n);
    for (int k = 0; k + 1 < n; ++k) {
      const double c =
          per_axis == 1
              ? 0.0
              : -obstacle + 2.0 * obstacle * idx[static_cast<std::size_t>(k)] /
                                (per_axis - 1.0);
      o += c * basis[static_cast<std::size_t>(k)];
    }
    offsets.push_back(std::move(o));
    int k = 0;
    while (k + 1 < n && ++idx[static_cast<std::size_t>(k)] == per_axis) {
      idx[static_cast<std::size_t>(k)] = 0;
      ++k;
    }
    if (k + 1 >= n) break;
  }

  std::vector<int> partner;
  if (root.index >= 0) {
    std::vector<Vec> centers;
    for (const Piece& piece : hf.pieces) centers.push_back(piece.center);
    partner = mirror_pairing(
        centers, hf.rs.roots[static_cast<std::size_t>(root.index)]);
  }

  IntegratorOptions opt;
  opt.rel_tol = opt.abs_tol = tol;

  struct RayResult {
    double lateral = 0.0, angular = 0.0, drift = 0.0, delay = 0.0;
    int crossed = 0;
    bool paired = true;
  };
  std::vector<RayResult> results(offsets.size());
  parallel_for(offsets.size(), [&](std::size_t i) {
    GeodesicState s0;
    s0.x = offsets[i] - launch * d;
    s0.p = p0;
    const TraceResult trace = integrate(hf, s0, bounding, opt);
    RayResult& r = results[i];
    r.lateral = lateral_deviation(trace.entry_line, trace.exit_line);
    r.angular = angular_deviation(trace.entry_line.direction,
                                  trace.exit_line.direction);
    r.drift = trace.energy_drift;
    r.delay = std::abs(trace.time_delay);
    std::vector<int> distinct;
    for (int b : trace.balls_crossed)
      if (distinct.empty() || distinct.back() != b) distinct.push_back(b);
    r.crossed = static_cast<int>(distinct.size());
    if (root.index >= 0) {
      r.paired = distinct.empty() ||
                 (distinct.size() == 2 &&
                  partner[static_cast<std::size_t>(distinct[0])] == distinct[1]);
    }
  });

  InvisibilityReport rep;
  rep.direction = direction;
  rep.rays = static_cast<int>(results.size());
  rep.root = root.index;
  for (const RayResult& r : results) {
    rep.max_lateral = std::max(rep.max_lateral, r.lateral);
    rep.max_angular = std::max(rep.max_angular, r.angular);
    rep.max_energy_drift = std::max(rep.max_energy_drift, r.drift);
    rep.max_time_delay = std::max(rep.max_time_delay, r.delay);
    rep.max_balls_crossed = std::max(rep.max_balls_crossed, r.crossed);
    if (r.crossed > 0) ++rep.hits;
    rep.crossings_paired = rep.crossings_paired && r.paired;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Reflection symmetry of the field
// ---------------------------------------------------------------------------

struct SymmetryReport {
  int samples = 0;
  double max_residual = 0.0;
};

// max over random points x and generators s of |H(s x) - s H(x) s^T|.
inline SymmetryReport verify_symmetry(const HamiltonianField& hf, int samples) {
  const int n = hf.rs.n;
  const double box = hf.obstacle_radius();
  DeterministicRng rng(0x5ca1ab1eu);
  SymmetryReport rep;
  rep.samples = samples;
  for (int s = 0; s < samples; ++s) {
    Vec x(n);
    for (int d = 0; d < n; ++d) x[d] = rng.range(-box, box);
    const Mat hx = solve_H(hf, x).first;
    for (int i = 0; i < hf.rs.N; ++i) {
      const Mat refl = reflection(hf.rs.roots[static_cast<std::size_t>(i)]);
      const Mat lhs = solve_H(hf, refl * x).first;
      const double resid =
          (lhs - refl * hx * refl.transpose()).cwiseAbs().maxCoeff();
      rep.max_residual = std::max(rep.max_residual, resid);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// First-order flatness obstruction
// ---------------------------------------------------------------------------

// (grad(phi_{kl} - (phi_k - phi_l))(x), v_k + v_l) with phi_{kl} the bump of
// the difference root v_k - v_l; x in the base-ball frame, 0 <= k < l < n.
// A flat metric forces this to vanish identically, so a nonzero value
// certifies non-flatness.
inline double flatness_obstruction(const HamiltonianField& hf, int k, int l,
                                   const Vec& x) {
  const Vec combo = hf.bs.grad_phi(hf.rs.pair_index(k, l), x) -
                    hf.bs.grad_phi(k, x) + hf.bs.grad_phi(l, x);
  return combo.dot(hf.rs.roots[static_cast<std::size_t>(k)] +
                   hf.rs.roots[static_cast<std::size_t>(l)]);
}

struct ObstructionScan {
  double max_abs = 0.0;
  Vec argmax;
  int k = -1, l = -1;
};

inline ObstructionScan scan_flatness_obstruction(const HamiltonianField& hf,
                                                 int grid_resolution) {
  ObstructionScan scan;
  scan.argmax = hf.bs.center;
  const std::vector<Vec> grid =
      detail::ball_grid(hf.bs.center, hf.bs.radius, grid_resolution);
  for (const Vec& x : grid)
    for (int k = 0; k < hf.rs.n; ++k)
      for (int l = k + 1; l < hf.rs.n; ++l) {
        const double val = std::abs(flatness_obstruction(hf, k, l, x));
        if (val > scan.max_abs) {
          scan.max_abs = val;
          scan.argmax = x;
          scan.k = k;
          scan.l = l;
        }
      }
  return scan;
}

// ---------------------------------------------------------------------------
// Curvature by finite differences of the solved field
// ---------------------------------------------------------------------------

struct Tensor4 {
  int n = 0;
  std::vector<double> v;
  explicit Tensor4(int dim)
      : n(dim),
        v(static_cast<std::size_t>(dim) * dim * dim * dim, 0.0) {}
  double& operator()(int i, int j, int k, int l) {
    return v[static_cast<std::size_t>(((i * n + j) * n + k) * n + l)];
  }
  double operator()(int i, int j, int k, int l) const {
    return v[static_cast<std::size_t>(((i * n + j) * n + k) * n + l)];
  }
  double max_abs() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
};

namespace detail {

inline Mat metric_tensor(const HamiltonianField& hf, const Vec& x) {
  return solve_H(hf, x).first.inverse();
}

// Gamma[i](j, l) by central differences of the metric tensor.
inline std::vector<Mat> christoffel(const HamiltonianField& hf, const Vec& x,
                                    double h) {
  const int n = hf.rs.n;
  std::vector<Mat> dG;
  dG.reserve(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    Vec xp = x, xm = x;
    xp[m] += h;
    xm[m] -= h;
    dG.push_back((metric_tensor(hf, xp) - metric_tensor(hf, xm)) / (2.0 * h));
  }
  const Mat H = solve_H(hf, x).first;
  std::vector<Mat> gamma(static_cast<std::size_t>(n), Mat::Zero(n, n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        double sum = 0.0;
        for (int m = 0; m < n; ++m)
          sum += H(i, m) * (dG[static_cast<std::size_t>(j)](m, l) +
                            dG[static_cast<std::size_t>(l)](m, j) -
                            dG[static_cast<std::size_t>(m)](j, l));
        gamma[static_cast<std::size_t>(i)](j, l) = 0.5 * sum;
      }
  return gamma;
}

// R^i_{jkl} = d_k Gamma^i_{jl} - d_l Gamma^i_{jk} + Gamma^i_{km} Gamma^m_{jl}
//           - Gamma^i_{lm} Gamma^m_{jk}
inline Tensor4 riemann_up(const HamiltonianField& hf, const Vec& x, double h) {
  const int n = hf.rs.n;
  const std::vector<Mat> gamma = christoffel(hf, x, h);
  std::vector<std::vector<Mat>> dgamma;
  dgamma.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    const std::vector<Mat> gp = christoffel(hf, xp, h);
    const std::vector<Mat> gm = christoffel(hf, xm, h);
    std::vector<Mat> d(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      d[static_cast<std::size_t>(i)] =
          (gp[static_cast<std::size_t>(i)] - gm[static_cast<std::size_t>(i)]) /
          (2.0 * h);
    dgamma.push_back(std::move(d));
  }
  Tensor4 r(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          double val = dgamma[static_cast<std::size_t>(k)]
                              [static_cast<std::size_t>(i)](j, l) -
                       dgamma[static_cast<std::size_t>(l)]
                              [static_cast<std::size_t>(i)](j, k);
          for (int m = 0; m < n; ++m)
            val += gamma[static_cast<std::size_t>(i)](k, m) *
                       gamma[static_cast<std::size_t>(m)](j, l) -
                   gamma[static_cast<std::size_t>(i)](l, m) *
                       gamma[static_cast<std::size_t>(m)](j, k);
          r(i, j, k, l) = val;
        }
  return r;
}

}  // namespace detail

struct CurvatureSample {
  Vec x;
  double max_riemann = 0.0;
  double scalar = 0.0;
};

inline CurvatureSample curvature(const HamiltonianField& hf, const Vec& x,
                                 double fd_step) {
  const int n = hf.rs.n;
  const Tensor4 r = detail::riemann_up(hf, x, fd_step);
  CurvatureSample sample;
  sample.x = x;
  sample.max_riemann = r.max_abs();
  Mat ricci = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l)
      for (int i = 0; i < n; ++i) ricci(j, l) += r(i, j, i, l);
  const Mat H = solve_H(hf, x).first;  // inverse metric
  sample.scalar = (H.array() * ricci.array()).sum();
  return sample;
}

// Lowered tensor R_{ijkl} for the finite-difference symmetry checks.
inline Tensor4 riemann_lowered(const HamiltonianField& hf, const Vec& x,
                               double fd_step) {
  const int n = hf.rs.n;
  const Tensor4 up = detail::riemann_up(hf, x, fd_step);
  const Mat G = detail::metric_tensor(hf, x);
  Tensor4 low(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          double sum = 0.0;
          for (int m = 0; m < n; ++m) sum += G(i, m) * up(m, j, k, l);
          low(i, j, k, l) = sum;
        }
  return low;
}

// ---------------------------------------------------------------------------
// Mirror symmetry of a root-direction trace
// ---------------------------------------------------------------------------

struct MirrorCheck {
  bool applicable = false;
  double max_mismatch = 0.0;
};

// A trace through a mirror pair must be carried onto itself by the
// reflection: the reflected entry/exit points of one ball are the exit/entry
// points of its partner.
inline MirrorCheck check_trace_mirror_symmetry(const HamiltonianField& hf,
                                               const TraceResult& trace,
                                               int root_index) {
  MirrorCheck check;
  if (trace.crossings.size() != 2) return check;
  check.applicable = true;
  const Vec& v = hf.rs.roots[static_cast<std::size_t>(root_index)];
  const Mat s = reflection(v);
  std::vector<Vec> centers;
  for (const Piece& piece : hf.pieces) centers.push_back(piece.center);
  const std::vector<int> partner = mirror_pairing(centers, v);
  const BallCrossing& a = trace.crossings[0];
  const BallCrossing& b = trace.crossings[1];
  if (partner[static_cast<std::size_t>(a.ball)] != b.ball) {
    check.max_mismatch = std::numeric_limits<double>::infinity();
    return check;
  }
  check.max_mismatch =
      std::max((s * a.x_entry - b.x_exit).norm(), (s * a.x_exit - b.x_entry).norm());
  return check;
}

// ---------------------------------------------------------------------------
// Energy-level membership
// ---------------------------------------------------------------------------

struct EnergyLevelReport {
  int points = 0;
  double max_residual = 0.0;
};

// max over base-ball grid points and sections of |(1/2)(H w_i, w_i) - 1|.
inline EnergyLevelReport verify_energy_level(const HamiltonianField& hf,
                                             int target_points) {
  int per_axis = 2;
  std::vector<Vec> grid;
  for (;;) {
    grid = detail::ball_grid(hf.bs.center, hf.bs.radius, per_axis);
    if (static_cast<int>(grid.size()) >= target_points) break;
    ++per_axis;
  }
  EnergyLevelReport rep;
  rep.points = static_cast<int>(grid.size());
  std::vector<double> worst(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t g) {
    const detail::BaseSolve s = detail::solve_base(hf, grid[g]);
    const std::vector<Vec> w = section_slopes(hf, grid[g]);
    double local = 0.0;
    for (const Vec& wi : w)
      local = std::max(local, std::abs(0.5 * wi.dot(s.H * wi) - 1.0));
    worst[g] = local;
  });
  for (double w : worst) rep.max_residual = std::max(rep.max_residual, w);
  return rep;
}

}  // namespace invis

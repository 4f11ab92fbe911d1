#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "invis/bumps.hpp"
#include "invis/common.hpp"
#include "invis/rootsys.hpp"

namespace invis {

// One ball of the obstacle: ball i is rotation * (base ball), so its center
// is rotation applied to the base center.
struct Piece {
  Vec center;
  Mat rotation;
};

struct SolveReport {
  double condition_number = 1.0;  // of the assembled system (2-norm)
  double residual = 0.0;          // max row residual of the linear solve
  double min_eigenvalue = 1.0;    // of H at the point
};

// The global Hamiltonian matrix field.  H(x) is the identity outside every
// ball; inside ball i it is the base-ball solution pushed forward by the
// piece rotation.  Everything here is immutable after construction and safe
// for unrestricted concurrent reads.
struct HamiltonianField {
  RootSystem rs;
  BumpSet bs;
  double epsilon = 0.0;
  std::vector<Piece> pieces;

  double radius() const { return bs.radius; }

  // hint, when valid, is checked first; the flow spends long stretches inside
  // a single ball.
  int ball_index(const Vec& x, int hint = -1) const {
    if (hint >= 0 && hint < static_cast<int>(pieces.size()) &&
        (x - pieces[static_cast<std::size_t>(hint)].center).norm() < bs.radius)
      return hint;
    for (std::size_t i = 0; i < pieces.size(); ++i)
      if ((x - pieces[i].center).norm() < bs.radius) return static_cast<int>(i);
    return -1;
  }

  // Radius of a sphere around the origin containing every ball.
  double obstacle_radius() const {
    double m = 0.0;
    for (const Piece& p : pieces) m = std::max(m, p.center.norm());
    return m + bs.radius;
  }

  // Base-frame coordinates of a point inside piece i.
  Vec base_point(int i, const Vec& x) const {
    const Piece& p = pieces[static_cast<std::size_t>(i)];
    return p.rotation.transpose() * (x - p.center) + bs.center;
  }
};

inline HamiltonianField single_ball_field(const RootSystem& rs,
                                          const BumpSet& bs, double eps) {
  HamiltonianField hf{rs, bs, eps, {}};
  hf.pieces.push_back({bs.center, Mat::Identity(rs.n, rs.n)});
  return hf;
}

inline HamiltonianField symmetrized_field(const RootSystem& rs,
                                          const BumpSet& bs, double eps,
                                          const WeylGroup& group) {
  HamiltonianField hf{rs, bs, eps, {}};
  hf.pieces.reserve(group.elements.size());
  for (std::size_t i = 0; i < group.elements.size(); ++i)
    hf.pieces.push_back({group.centers[i], group.elements[i]});
  return hf;
}

// Section slopes at a base-frame point: w_i(y) = v_i + eps * grad phi_i(y).
inline std::vector<Vec> section_slopes(const HamiltonianField& hf,
                                       const Vec& y) {
  std::vector<Vec> w;
  w.reserve(static_cast<std::size_t>(hf.rs.N));
  for (int i = 0; i < hf.rs.N; ++i)
    w.push_back(hf.rs.roots[static_cast<std::size_t>(i)] +
                hf.epsilon * hf.bs.grad_phi(i, y));
  return w;
}

// N x N system on the packed symmetric unknowns h_ab (a <= b, lexicographic):
// row i encodes (H w_i, w_i) = 2, so the coefficient of h_aa is w_i[a]^2 and
// the coefficient of h_ab, a < b, is 2 w_i[a] w_i[b].  y is a base-frame
// point.
inline std::pair<Mat, Vec> assemble_system(const HamiltonianField& hf,
                                           const Vec& y) {
  const int n = hf.rs.n;
  const int N = hf.rs.N;
  const std::vector<Vec> w = section_slopes(hf, y);
  Mat A(N, N);
  for (int i = 0; i < N; ++i) {
    const Vec& wi = w[static_cast<std::size_t>(i)];
    for (int a = 0; a < n; ++a) {
      A(i, sym_index(n, a, a)) = wi[a] * wi[a];
      for (int b = a + 1; b < n; ++b)
        A(i, sym_index(n, a, b)) = 2.0 * wi[a] * wi[b];
    }
  }
  return {std::move(A), Vec::Constant(N, 2.0)};
}

namespace detail {

struct BaseSolve {
  Mat A;
  Eigen::PartialPivLU<Mat> lu;
  Vec vec_h;  // packed solution
  Mat H;      // unpacked base-frame Hamiltonian matrix
};

inline BaseSolve solve_base(const HamiltonianField& hf, const Vec& y) {
  BaseSolve s;
  Vec rhs;
  std::tie(s.A, rhs) = assemble_system(hf, y);
  s.lu.compute(s.A);
  const Vec d = s.lu.matrixLU().diagonal().cwiseAbs();
  const double dmax = d.maxCoeff();
  const double dmin = d.minCoeff();
  if (!(dmin > 0.0) || dmax / dmin > 1e12)
    throw SingularSystem("assembled system is numerically singular at a "
                         "base-frame point (pivot ratio " +
                         fmt17(dmin > 0.0 ? dmax / dmin
                                          : std::numeric_limits<double>::infinity()) +
                         "); epsilon too large or degenerate bump data");
  s.vec_h = s.lu.solve(rhs);
  s.H = unpack_symmetric(hf.rs.n, s.vec_h);
  return s;
}

// d vec(H)/dy_s = -A^{-1} (dA/dy_s) vec(H), with dA from the bump Hessians.
inline std::vector<Mat> base_derivatives(const HamiltonianField& hf,
                                         const BaseSolve& s, const Vec& y) {
  const int n = hf.rs.n;
  const int N = hf.rs.N;
  std::vector<Vec> w = section_slopes(hf, y);
  std::vector<Mat> hess;
  hess.reserve(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) hess.push_back(hf.bs.hess_phi(i, y));

  std::vector<Mat> out;
  out.reserve(static_cast<std::size_t>(n));
  Mat dA(N, N);
  for (int m = 0; m < n; ++m) {
    for (int i = 0; i < N; ++i) {
      const Vec& wi = w[static_cast<std::size_t>(i)];
      // dw_i/dy_m = eps * (column m of hess phi_i)
      const Vec dw = hf.epsilon * hess[static_cast<std::size_t>(i)].col(m);
      for (int a = 0; a < n; ++a) {
        dA(i, sym_index(n, a, a)) = 2.0 * wi[a] * dw[a];
        for (int b = a + 1; b < n; ++b)
          dA(i, sym_index(n, a, b)) = 2.0 * (dw[a] * wi[b] + wi[a] * dw[b]);
      }
    }
    out.push_back(unpack_symmetric(n, Vec(-s.lu.solve(dA * s.vec_h))));
  }
  return out;
}

}  // namespace detail

// Combined fast evaluation used by the geodesic flow.  Outside every ball the
// field is exactly Euclidean: H is the identity and every derivative is the
// zero matrix.
struct FieldEval {
  int ball = -1;
  Mat H;
  std::vector<Mat> dH;
};

inline FieldEval evaluate_field(const HamiltonianField& hf, const Vec& x,
                                bool with_derivatives, int ball_hint = -1) {
  FieldEval ev;
  ev.ball = hf.ball_index(x, ball_hint);
  const int n = hf.rs.n;
  if (ev.ball < 0) {
    ev.H = Mat::Identity(n, n);
    if (with_derivatives) ev.dH.assign(static_cast<std::size_t>(n), Mat::Zero(n, n));
    return ev;
  }
  const Piece& piece = hf.pieces[static_cast<std::size_t>(ev.ball)];
  const Vec y = hf.base_point(ev.ball, x);
  const detail::BaseSolve s = detail::solve_base(hf, y);
  ev.H = piece.rotation * s.H * piece.rotation.transpose();
  if (with_derivatives) {
    const std::vector<Mat> base = detail::base_derivatives(hf, s, y);
    ev.dH.reserve(static_cast<std::size_t>(n));
    for (int m = 0; m < n; ++m) {
      Mat combined = Mat::Zero(n, n);
      for (int q = 0; q < n; ++q)
        combined += piece.rotation(m, q) * base[static_cast<std::size_t>(q)];
      ev.dH.push_back(piece.rotation * combined * piece.rotation.transpose());
    }
  }
  return ev;
}

// Global solve with diagnostics.  The condition number is the exact 2-norm
// condition of the assembled base system.
inline std::pair<Mat, SolveReport> solve_H(const HamiltonianField& hf,
                                           const Vec& x) {
  const int n = hf.rs.n;
  const int ball = hf.ball_index(x);
  if (ball < 0) return {Mat::Identity(n, n), SolveReport{}};

  const Vec y = hf.base_point(ball, x);
  auto [A, rhs] = assemble_system(hf, y);
  Eigen::JacobiSVD<Mat> svd(A);
  const double smin = svd.singularValues().minCoeff();
  const double cond = smin > 0.0
                          ? svd.singularValues().maxCoeff() / smin
                          : std::numeric_limits<double>::infinity();
  if (!(cond <= 1e12))
    throw SingularSystem(
        "assembled system is numerically singular (condition number " +
        fmt17(cond) + "); epsilon too large or degenerate bump data");
  const Vec vec_h = A.partialPivLu().solve(rhs);
  SolveReport report;
  report.condition_number = cond;
  report.residual = (A * vec_h - rhs).cwiseAbs().maxCoeff();
  const Mat Hb = unpack_symmetric(n, vec_h);
  Eigen::SelfAdjointEigenSolver<Mat> eig(Hb, Eigen::EigenvaluesOnly);
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  if (report.min_eigenvalue <= 0.0)
    throw NotPositiveDefinite(
        "solved Hamiltonian matrix is not positive definite (min eigenvalue " +
        fmt17(report.min_eigenvalue) + "); epsilon above the admissible threshold");
  const Mat& R = hf.pieces[static_cast<std::size_t>(ball)].rotation;
  return {R * Hb * R.transpose(), report};
}

// dH/dx_m of the global field; the zero matrix outside every bump support.
inline Mat dH(const HamiltonianField& hf, const Vec& x, int m) {
  FieldEval ev = evaluate_field(hf, x, true);
  if (ev.ball < 0) return Mat::Zero(hf.rs.n, hf.rs.n);
  return std::move(ev.dH[static_cast<std::size_t>(m)]);
}

namespace detail {

// Product grid over the bounding cube of a ball, restricted to the open ball.
inline std::vector<Vec> ball_grid(const Vec& center, double radius,
                                  int per_axis) {
  const int n = static_cast<int>(center.size());
  std::vector<Vec> grid;
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (;;) {
    Vec x = center;
    for (int d = 0; d < n; ++d)
      x[d] += radius * (-1.0 + 2.0 * idx[static_cast<std::size_t>(d)] /
                                   (per_axis - 1.0));
    if ((x - center).norm() < radius) grid.push_back(std::move(x));
    int d = 0;
    while (d < n && ++idx[static_cast<std::size_t>(d)] == per_axis) {
      idx[static_cast<std::size_t>(d)] = 0;
      ++d;
    }
    if (d == n) break;
  }
  return grid;
}

}  // namespace detail

// Largest epsilon for which the solve stays well conditioned and H stays
// safely positive definite on a grid over the base ball, made conservative by
// halving.  When the whole search interval passes, the upper search bound is
// returned as-is.
inline double max_admissible_epsilon(const RootSystem& rs, const BumpSet& bs,
                                     int grid_resolution) {
  const std::vector<Vec> grid =
      detail::ball_grid(bs.center, bs.radius, grid_resolution);

  auto admissible = [&](double eps) {
    const HamiltonianField trial = single_ball_field(rs, bs, eps);
    try {
      for (const Vec& x : grid)
        if (solve_H(trial, x).second.min_eigenvalue <= 0.01) return false;
    } catch (const SingularSystem&) {
      return false;
    } catch (const NotPositiveDefinite&) {
      return false;
    }
    return true;
  };

  const double floor_eps = 1e-6;
  double hi = 2.0;
  if (admissible(hi)) return hi;
  if (!admissible(floor_eps))
    throw ThresholdNotFound(
        "no admissible epsilon at or above 1e-6; bump data is pathological");
  double lo = floor_eps;
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    (admissible(mid) ? lo : hi) = mid;
  }
  return 0.5 * lo;
}

// ---------------------------------------------------------------------------
// Obstacle geometry
// ---------------------------------------------------------------------------

// Distance between segments [p1,q1] and [p2,q2] in any dimension.
inline double segment_distance(const Vec& p1, const Vec& q1, const Vec& p2,
                               const Vec& q2) {
  const Vec d1 = q1 - p1;
  const Vec d2 = q2 - p2;
  const Vec r = p1 - p2;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
  constexpr double kTiny = 1e-30;
  double s = 0.0, t = 0.0;
  if (a <= kTiny && e <= kTiny) {
    // both degenerate
  } else if (a <= kTiny) {
    t = clamp01(f / e);
  } else {
    const double c = d1.dot(r);
    if (e <= kTiny) {
      s = clamp01(-c / a);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > kTiny * a * e ? clamp01((b * f - c * e) / denom) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = clamp01(-c / a);
      } else if (t > 1.0) {
        t = 1.0;
        s = clamp01((b - c) / a);
      }
    }
  }
  return (p1 + s * d1 - (p2 + t * d2)).norm();
}

// For each center, the index of its mirror image under the reflection in the
// given root.  Throws GeometryInvalid when the orbit does not close up.
inline std::vector<int> mirror_pairing(const std::vector<Vec>& centers,
                                       const Vec& root) {
  const Mat s = reflection(root);
  std::vector<int> partner(centers.size(), -1);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Vec image = s * centers[i];
    for (std::size_t j = 0; j < centers.size(); ++j) {
      if ((image - centers[j]).norm() < 1e-9) {
        partner[i] = static_cast<int>(j);
        break;
      }
    }
    if (partner[i] < 0 || partner[i] == static_cast<int>(i))
      throw GeometryInvalid(
          "centers do not pair up under the reflection of a root");
  }
  return partner;
}

struct GeometryReport {
  bool pairing_ok = true;
  bool balls_disjoint = true;
  bool capsules_disjoint = true;
  bool no_collinear_triple = true;
  double min_ball_gap = std::numeric_limits<double>::infinity();
  std::array<int, 2> worst_ball_pair{-1, -1};
  double min_capsule_gap = std::numeric_limits<double>::infinity();
  int worst_capsule_root = -1;
  std::array<int, 2> worst_capsule_pair{-1, -1};  // representative balls
  double min_line_residual = std::numeric_limits<double>::infinity();
  std::array<int, 3> worst_triple{-1, -1, -1};

  bool pass() const {
    return pairing_ok && balls_disjoint && capsules_disjoint &&
           no_collinear_triple;
  }
};

namespace detail {

// Smallest center-center and capsule-axis separations of the configuration,
// evaluated at ball radius zero.
struct Separations {
  double min_center_dist = std::numeric_limits<double>::infinity();
  std::array<int, 2> center_pair{-1, -1};
  double min_segment_dist = std::numeric_limits<double>::infinity();
  int segment_root = -1;
  std::array<int, 2> segment_pair{-1, -1};
};

inline Separations compute_separations(const RootSystem& rs,
                                       const std::vector<Vec>& centers) {
  Separations sep;
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      const double d = (centers[i] - centers[j]).norm();
      if (d < sep.min_center_dist) {
        sep.min_center_dist = d;
        sep.center_pair = {static_cast<int>(i), static_cast<int>(j)};
      }
    }
  for (int k = 0; k < rs.N; ++k) {
    const std::vector<int> partner =
        mirror_pairing(centers, rs.roots[static_cast<std::size_t>(k)]);
    std::vector<int> reps;
    for (std::size_t i = 0; i < centers.size(); ++i)
      if (static_cast<int>(i) < partner[i]) reps.push_back(static_cast<int>(i));
    for (std::size_t a = 0; a < reps.size(); ++a)
      for (std::size_t b = a + 1; b < reps.size(); ++b) {
        const int ia = reps[a];
        const int ib = reps[b];
        const double d = segment_distance(
            centers[static_cast<std::size_t>(ia)],
            centers[static_cast<std::size_t>(partner[static_cast<std::size_t>(ia)])],
            centers[static_cast<std::size_t>(ib)],
            centers[static_cast<std::size_t>(partner[static_cast<std::size_t>(ib)])]);
        if (d < sep.min_segment_dist) {
          sep.min_segment_dist = d;
          sep.segment_root = k;
          sep.segment_pair = {ia, ib};
        }
      }
  }
  return sep;
}

}  // namespace detail

// Largest radius keeping balls and capsule pairs disjoint is a quarter of the
// smallest radius-zero separation times two; half of that maximum is used so
// the conditions hold with margin.
inline double auto_ball_radius(const RootSystem& rs,
                               const std::vector<Vec>& centers) {
  const detail::Separations sep = detail::compute_separations(rs, centers);
  return 0.25 * std::min(sep.min_center_dist, sep.min_segment_dist);
}

// Checks the smallness conditions behind the two-ball crossing guarantee:
// (a) balls pairwise disjoint, (b) for each root the s_v-symmetric capsule
// pairs are pairwise disjoint, (c) no three centers collinear.
inline GeometryReport validate_geometry(const HamiltonianField& hf) {
  GeometryReport rep;
  const double rho = hf.radius();
  std::vector<Vec> centers;
  centers.reserve(hf.pieces.size());
  for (const Piece& p : hf.pieces) centers.push_back(p.center);

  detail::Separations sep;
  try {
    sep = detail::compute_separations(hf.rs, centers);
  } catch (const GeometryInvalid&) {
    rep.pairing_ok = false;
    rep.balls_disjoint = rep.capsules_disjoint = false;
    return rep;
  }
  rep.min_ball_gap = sep.min_center_dist - 2.0 * rho;
  rep.worst_ball_pair = sep.center_pair;
  rep.balls_disjoint = rep.min_ball_gap > 0.0;
  rep.min_capsule_gap = sep.min_segment_dist - 2.0 * rho;
  rep.worst_capsule_root = sep.segment_root;
  rep.worst_capsule_pair = sep.segment_pair;
  rep.capsules_disjoint = rep.min_capsule_gap > 0.0;

  constexpr double kCollinearTol = 1e-9;
  for (std::size_t i = 0; i < centers.size() && rep.min_line_residual >= 0.0; ++i)
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      const Vec axis = (centers[j] - centers[i]).normalized();
      for (std::size_t k = j + 1; k < centers.size(); ++k) {
        const Vec d = centers[k] - centers[i];
        const double resid = (d - d.dot(axis) * axis).norm();
        if (resid < rep.min_line_residual) {
          rep.min_line_residual = resid;
          rep.worst_triple = {static_cast<int>(i), static_cast<int>(j),
                              static_cast<int>(k)};
        }
      }
    }
  rep.no_collinear_triple = rep.min_line_residual >= kCollinearTol;
  return rep;
}

}  // namespace invis

#include "invis/metricfield.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using invis::HamiltonianField;
using invis::Mat;
using invis::single_ball_field;
using invis::solve_H;
using invis::symmetrized_field;
using invis::Vec;

TEST(MetricField, EpsilonZeroSolvesToIdentity) {
  const auto& setup = fixtures::default_n2();
  const HamiltonianField flat =
      symmetrized_field(setup.rs, setup.bumps, 0.0, setup.group);
  const auto points =
      oracles::points_in_ball(setup.bumps.center, setup.bumps.radius, 50, 2u);
  for (const Vec& x : points) {
    const auto [H, report] = solve_H(flat, x);
    EXPECT_LT((H - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(report.residual, 1e-10);
  }
}

TEST(MetricField, OutsideBallsExactlyEuclidean) {
  const auto& setup = fixtures::default_n2();
  const auto& hf = setup.field;
  Vec x(2);
  x << 0.0, 0.0;  // origin is outside every chamber ball
  ASSERT_EQ(hf.ball_index(x), -1);
  const auto [H, report] = solve_H(hf, x);
  EXPECT_EQ((H - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(report.residual, 0.0);
  EXPECT_EQ(report.min_eigenvalue, 1.0);
  for (int m = 0; m < 2; ++m)
    EXPECT_EQ(invis::dH(hf, x, m).cwiseAbs().maxCoeff(), 0.0);
  // a point just past a ball surface
  const Vec y = hf.pieces[0].center +
                1.0000001 * hf.radius() * Vec::Unit(2, 0);
  EXPECT_EQ((solve_H(hf, y).first - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(),
            0.0);
}

// The named base-frame point: the packed-symmetric solve against an
// independent least-squares solve over the full n^2 parametrization.
TEST(MetricField, NamedPointMatchesLeastSquaresOracle) {
  const auto& setup = fixtures::default_n2();
  const auto& hf = setup.field;
  Vec x = setup.bumps.center;
  x[0] += 0.3 * setup.bumps.radius;
  x[1] += 0.1 * setup.bumps.radius;
  const Mat H = solve_H(hf, x).first;
  const Mat H_oracle = oracles::least_squares_H(hf, x);
  EXPECT_LT((H - H_oracle).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(MetricField, OracleAgreesAtRandomPoints) {
  const auto& setup = fixtures::default_n2();
  const auto& hf = setup.field;
  // points spread over several balls
  for (std::size_t piece = 0; piece < hf.pieces.size(); piece += 2) {
    const auto points = oracles::points_in_ball(
        hf.pieces[piece].center, hf.radius(), 20, 100 + piece);
    for (const Vec& x : points)
      EXPECT_LT((solve_H(hf, x).first - oracles::least_squares_H(hf, x))
                    .cwiseAbs()
                    .maxCoeff(),
                1e-8);
  }
}

// Re-substituting the solution into its constraints at a stiffer epsilon.
TEST(MetricField, ConstraintsHoldAtLargerEpsilon) {
  const auto& setup = fixtures::default_n2();
  const HamiltonianField hf =
      symmetrized_field(setup.rs, setup.bumps, 0.05, setup.group);
  const auto points =
      oracles::points_in_ball(hf.pieces[0].center, hf.radius(), 30, 17u);
  for (const Vec& x : points) {
    const auto [H, report] = solve_H(hf, x);
    EXPECT_GT(report.min_eigenvalue, 0.0);
    EXPECT_LT((H - H.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    const Vec y = hf.base_point(0, x);
    const Mat Hb = hf.pieces[0].rotation.transpose() * H * hf.pieces[0].rotation;
    for (int i = 0; i < hf.rs.N; ++i) {
      const Vec w = hf.rs.roots[i] + hf.epsilon * hf.bs.grad_phi(i, y);
      EXPECT_NEAR(w.dot(Hb * w), 2.0, 1e-10);
    }
  }
}

TEST(MetricField, DerivativeMatchesFiniteDifferences) {
  const auto& setup = fixtures::default_n2();
  const auto& hf = setup.field;
  const auto points =
      oracles::points_in_ball(hf.pieces[1].center, hf.radius(), 20, 23u, 0.85);
  const double h = 1e-5;
  for (const Vec& x : points)
    for (int m = 0; m < 2; ++m) {
      const auto f = [&](const Vec& y) -> Mat { return solve_H(hf, y).first; };
      const Mat fd = oracles::central_matrix_derivative(f, x, m, h);
      EXPECT_LT((invis::dH(hf, x, m) - fd).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(MetricField, DerivativeZeroAtEpsilonZero) {
  const auto& setup = fixtures::default_n2();
  const HamiltonianField flat =
      symmetrized_field(setup.rs, setup.bumps, 0.0, setup.group);
  const Vec x = flat.pieces[0].center + 0.4 * flat.radius() * Vec::Unit(2, 1);
  for (int m = 0; m < 2; ++m)
    EXPECT_EQ(invis::dH(flat, x, m).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MetricField, EquivariantUnderGenerators) {
  const auto& setup = fixtures::default_n2();
  const auto& hf = setup.field;
  const auto points = oracles::points_in_box(2, hf.obstacle_radius(), 100, 31u);
  for (const Vec& x : points) {
    const Mat hx = solve_H(hf, x).first;
    for (const Mat& s : setup.group.generators) {
      const Mat lhs = solve_H(hf, s * x).first;
      EXPECT_LT((lhs - s * hx * s.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(MetricField, EnergyLevelMembershipOnGrid) {
  const auto& setup = fixtures::default_n2();
  const auto& hf = setup.field;
  const auto grid =
      invis::detail::ball_grid(setup.bumps.center, setup.bumps.radius, 17);
  for (const Vec& y : grid) {
    const auto s = invis::detail::solve_base(hf, y);
    for (int i = 0; i < hf.rs.N; ++i) {
      const Vec w = hf.rs.roots[i] + hf.epsilon * hf.bs.grad_phi(i, y);
      EXPECT_NEAR(0.5 * w.dot(s.H * w), 1.0, 1e-10);
    }
  }
}

TEST(MetricField, AssembledSystemRowsEncodeConstraints) {
  const auto& setup = fixtures::default_n2();
  const auto& hf = setup.field;
  const Vec y = setup.bumps.center + 0.2 * setup.bumps.radius * Vec::Unit(2, 0);
  const auto [A, rhs] = invis::assemble_system(hf, y);
  EXPECT_EQ(A.rows(), hf.rs.N);
  EXPECT_EQ(A.cols(), hf.rs.N);
  EXPECT_EQ(rhs.minCoeff(), 2.0);
  EXPECT_EQ(rhs.maxCoeff(), 2.0);
  // row i applied to the packed solution reproduces (H w_i, w_i)
  const auto s = invis::detail::solve_base(hf, y);
  for (int i = 0; i < hf.rs.N; ++i) {
    const Vec w = hf.rs.roots[i] + hf.epsilon * hf.bs.grad_phi(i, y);
    EXPECT_NEAR(A.row(i).dot(s.vec_h), w.dot(s.H * w), 1e-12);
  }
}

// Far above the admissible threshold the solve must fail loudly, either as a
// singular system or a non-positive-definite solution.
TEST(MetricField, SolveFailsBeyondAdmissibleEpsilon) {
  const auto& setup = fixtures::default_n2();
  const HamiltonianField hot =
      single_ball_field(setup.rs, setup.bumps, 5.0);
  const auto points =
      oracles::points_in_ball(setup.bumps.center, setup.bumps.radius, 200, 97u);
  bool failed = false;
  for (const Vec& x : points) {
    try {
      solve_H(hot, x);
    } catch (const invis::SingularSystem&) {
      failed = true;
      break;
    } catch (const invis::NotPositiveDefinite&) {
      failed = true;
      break;
    }
  }
  EXPECT_TRUE(failed);
}

TEST(MetricField, MaxEpsilonThresholdNotFoundOnPathologicalBumps) {
  const auto& setup = fixtures::default_n2();
  invis::BumpSet wild = setup.bumps;
  for (double& a : wild.amplitudes) a *= 1e9;
  EXPECT_THROW(invis::max_admissible_epsilon(setup.rs, wild, 5),
               invis::ThresholdNotFound);
}

TEST(MetricField, MaxEpsilonUpperBoundForZeroAmplitudes) {
  const auto& setup = fixtures::default_n2();
  invis::BumpSet zero = setup.bumps;
  for (double& a : zero.amplitudes) a = 0.0;
  EXPECT_EQ(invis::max_admissible_epsilon(setup.rs, zero, 9), 2.0);
}

TEST(MetricField, MaxEpsilonShrinksWithAmplitude) {
  const auto& setup = fixtures::default_n2();
  invis::BumpSet doubled = setup.bumps;
  for (double& a : doubled.amplitudes) a *= 2.0;
  const double e1 = invis::max_admissible_epsilon(setup.rs, setup.bumps, 9);
  const double e2 = invis::max_admissible_epsilon(setup.rs, doubled, 9);
  EXPECT_GT(e1, 0.0);
  EXPECT_LT(e2, e1);
}

TEST(MetricField, PositiveDefiniteAtRandomPoints) {
  const auto& setup = fixtures::default_n2();
  const auto& hf = setup.field;
  const auto points = oracles::points_in_ball(setup.bumps.center,
                                              setup.bumps.radius, 10000, 41u);
  double min_eig = 1e9;
  for (const Vec& x : points)
    min_eig = std::min(min_eig, solve_H(hf, x).second.min_eigenvalue);
  EXPECT_GT(min_eig, 0.0);
}

// At epsilon = 0 the assembled matrix is the same at every point, so its
// condition number is a constant of the dimension; at the resolved epsilon it
// must stay within a factor two of itself across the ball.
TEST(MetricField, ConditionNumberStableOverBall) {
  const auto& setup = fixtures::default_n2();
  const HamiltonianField flat =
      single_ball_field(setup.rs, setup.bumps, 0.0);
  const auto points =
      oracles::points_in_ball(setup.bumps.center, setup.bumps.radius, 20, 43u);
  const double flat_cond = solve_H(flat, setup.bumps.center).second.condition_number;
  for (const Vec& x : points)
    EXPECT_DOUBLE_EQ(solve_H(flat, x).second.condition_number, flat_cond);

  const auto& hf = setup.field;
  double cmin = 1e300, cmax = 0.0;
  for (const Vec& x : points) {
    const double c = solve_H(hf, x).second.condition_number;
    cmin = std::min(cmin, c);
    cmax = std::max(cmax, c);
  }
  EXPECT_LT(cmax / cmin, 2.0);
}

TEST(MetricField, GeometryPassesOnAutoRadius) {
  for (int n : {2, 3}) {
    const auto& setup = n == 2 ? fixtures::default_n2() : fixtures::default_n3();
    const invis::GeometryReport rep = invis::validate_geometry(setup.field);
    EXPECT_TRUE(rep.pass());
    EXPECT_GT(rep.min_ball_gap, 0.0);
    EXPECT_GT(rep.min_capsule_gap, 0.0);
    EXPECT_GT(rep.min_line_residual, 1e-9);
  }
}

TEST(MetricField, GeometryFailsAtTenTimesAutoRadius) {
  const auto& setup = fixtures::default_n2();
  invis::BumpSet fat = setup.bumps;
  fat.radius *= 10.0;
  const HamiltonianField hf =
      symmetrized_field(setup.rs, fat, setup.field.epsilon, setup.group);
  const invis::GeometryReport rep = invis::validate_geometry(hf);
  EXPECT_FALSE(rep.pass());
  EXPECT_FALSE(rep.balls_disjoint && rep.capsules_disjoint);
  if (!rep.balls_disjoint) {
    EXPECT_GE(rep.worst_ball_pair[0], 0);
    EXPECT_GE(rep.worst_ball_pair[1], 0);
  } else {
    EXPECT_GE(rep.worst_capsule_pair[0], 0);
  }
}

// One reflection with no fixed chamber pairs the six plane balls into three.
TEST(MetricField, PlaneBallsPairUpInThrees) {
  const auto& setup = fixtures::default_n2();
  const auto partner =
      invis::mirror_pairing(setup.group.centers, setup.rs.roots[0]);
  int pairs = 0;
  for (std::size_t i = 0; i < partner.size(); ++i) {
    EXPECT_NE(partner[i], static_cast<int>(i));
    EXPECT_EQ(partner[static_cast<std::size_t>(partner[i])],
              static_cast<int>(i));
    if (static_cast<int>(i) < partner[i]) ++pairs;
  }
  EXPECT_EQ(pairs, 3);
}

TEST(MetricField, SegmentDistanceBasics) {
  auto seg = [](double ax, double ay, double bx, double by) {
    Vec a(2), b(2);
    a << ax, ay;
    b << bx, by;
    return std::pair<Vec, Vec>(a, b);
  };
  const auto [a0, a1] = seg(0, 0, 1, 0);
  const auto [b0, b1] = seg(0, 1, 1, 1);
  EXPECT_NEAR(invis::segment_distance(a0, a1, b0, b1), 1.0, 1e-14);
  const auto [c0, c1] = seg(0.5, -1, 0.5, 1);
  EXPECT_NEAR(invis::segment_distance(a0, a1, c0, c1), 0.0, 1e-14);
  const auto [d0, d1] = seg(3, 4, 5, 4);
  EXPECT_NEAR(invis::segment_distance(a0, a1, d0, d1), std::hypot(2.0, 4.0),
              1e-12);
}

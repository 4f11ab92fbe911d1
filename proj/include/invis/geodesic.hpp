#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "invis/common.hpp"
#include "invis/metricfield.hpp"

namespace invis {

struct GeodesicState {
  Vec x;  // position
  Vec p;  // momentum covector
  double t = 0.0;
};

struct LineSpec {
  Vec point;
  Vec direction;  // unit Euclidean norm
};

struct BallCrossing {
  int ball = -1;
  double t_entry = 0.0;
  Vec x_entry;
  double t_exit = 0.0;
  Vec x_exit;
};

struct TraceSample {
  double t;
  Vec x;
  Vec p;
  double energy;
};

struct IntegratorOptions {
  double rel_tol = 1e-12;
  double abs_tol = 1e-12;
  double max_param = 1e3;
};

struct TraceResult {
  std::vector<TraceSample> polyline;
  LineSpec entry_line;
  LineSpec exit_line;
  std::vector<int> balls_crossed;  // in crossing order
  std::vector<BallCrossing> crossings;
  double energy_drift = 0.0;
  double time_delay = 0.0;  // arrival delay versus the straight Euclidean ray
};

// Hamilton's equations for h = (1/2)(H p, p):
//   dx/dt = H p,   dp_m/dt = -(1/2) (p, dH/dx_m p).
struct HamiltonRhs {
  Vec dx;
  Vec dp;
};

inline HamiltonRhs hamilton_rhs(const HamiltonianField& hf,
                                const GeodesicState& s) {
  const int n = hf.rs.n;
  const FieldEval ev = evaluate_field(hf, s.x, true);
  HamiltonRhs out;
  out.dx = ev.H * s.p;
  out.dp = Vec(n);
  for (int m = 0; m < n; ++m)
    out.dp[m] = -0.5 * s.p.dot(ev.dH[static_cast<std::size_t>(m)] * s.p);
  return out;
}

namespace detail {

// Dormand-Prince 5(4) coefficients with the classic quartic dense output.
namespace dp5 {
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                 a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                 a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
// y5 - y4 weights
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// dense output
constexpr double d1 = -12715105075.0 / 11282082432.0;
constexpr double d3 = 87487479700.0 / 32700410799.0;
constexpr double d4 = -10690763975.0 / 1880347072.0;
constexpr double d5 = 701980252875.0 / 199316789632.0;
constexpr double d6 = -1453857185.0 / 822651844.0;
constexpr double d7 = 69997945.0 / 29380423.0;
}  // namespace dp5

// Flow right-hand side over the packed state y = [x; p].
class FlowRhs {
 public:
  explicit FlowRhs(const HamiltonianField& hf) : hf_(&hf), n_(hf.rs.n) {}

  void set_hint(int ball) { hint_ = ball; }

  // dy = f(y); also reports the energy (1/2)(H p, p) at the point.
  double operator()(const Vec& y, Vec& dy) const {
    const Vec x = y.head(n_);
    const Vec p = y.tail(n_);
    const FieldEval ev = evaluate_field(*hf_, x, true, hint_);
    dy.resize(2 * n_);
    dy.head(n_) = ev.H * p;
    for (int m = 0; m < n_; ++m)
      dy[n_ + m] = -0.5 * p.dot(ev.dH[static_cast<std::size_t>(m)] * p);
    return 0.5 * p.dot(dy.head(n_));
  }

 private:
  const HamiltonianField* hf_;
  int n_;
  int hint_ = -1;
};

// One adaptive Dormand-Prince step with dense output, FSAL: k[6] of an
// accepted step is f at its endpoint.
class Dopri5 {
 public:
  Dopri5(const FlowRhs& rhs, double rel_tol, double abs_tol)
      : rhs_(rhs), rel_(rel_tol), abs_(abs_tol) {}

  void prime(const Vec& y) {
    y0_ = y;
    end_energy_ = rhs_(y0_, k_[0]);
    fsal_ = true;
  }

  // Attempts a step of size h from the primed state; returns the error
  // measure (accepted when <= 1).
  double attempt(double h) {
    using namespace dp5;
    h_ = h;
    if (!fsal_) end_energy_ = rhs_(y0_, k_[0]);
    fsal_ = true;
    Vec y(y0_.size());
    y = y0_ + h * (a21 * k_[0]);
    rhs_(y, k_[1]);
    y = y0_ + h * (a31 * k_[0] + a32 * k_[1]);
    rhs_(y, k_[2]);
    y = y0_ + h * (a41 * k_[0] + a42 * k_[1] + a43 * k_[2]);
    rhs_(y, k_[3]);
    y = y0_ + h * (a51 * k_[0] + a52 * k_[1] + a53 * k_[2] + a54 * k_[3]);
    rhs_(y, k_[4]);
    y = y0_ + h * (a61 * k_[0] + a62 * k_[1] + a63 * k_[2] + a64 * k_[3] +
                   a65 * k_[4]);
    rhs_(y, k_[5]);
    y1_ = y0_ + h * (b1 * k_[0] + b3 * k_[2] + b4 * k_[3] + b5 * k_[4] +
                     b6 * k_[5]);
    end_energy_ = rhs_(y1_, k_[6]);
    const Vec err_vec = h * (e1 * k_[0] + e3 * k_[2] + e4 * k_[3] +
                             e5 * k_[4] + e6 * k_[5] + e7 * k_[6]);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < err_vec.size(); ++i) {
      const double sc =
          abs_ + rel_ * std::max(std::abs(y0_[i]), std::abs(y1_[i]));
      const double q = err_vec[i] / sc;
      sum += q * q;
    }
    const double err = std::sqrt(sum / static_cast<double>(err_vec.size()));
    return std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
  }

  // Commit the attempted step; k1 of the next step is the stored endpoint
  // derivative.
  void accept() {
    y0_ = y1_;
    k_[0] = k_[6];
    fsal_ = true;
  }

  // Continuous extension over the last attempted step, theta in [0, 1].
  Vec dense(double theta) const {
    using namespace dp5;
    const Vec diff = y1_ - y0_;
    const Vec r3 = h_ * k_[0] - diff;
    const Vec r4 = diff - h_ * k_[6] - r3;
    const Vec r5 = h_ * (d1 * k_[0] + d3 * k_[2] + d4 * k_[3] + d5 * k_[4] +
                         d6 * k_[5] + d7 * k_[6]);
    const double t1 = 1.0 - theta;
    return y0_ + theta * (diff + t1 * (r3 + theta * (r4 + t1 * r5)));
  }

  const Vec& current() const { return y0_; }
  const Vec& proposed() const { return y1_; }
  double end_energy() const { return end_energy_; }

 private:
  FlowRhs rhs_;
  double rel_, abs_;
  Vec y0_, y1_;
  Vec k_[7];
  double h_ = 0.0;
  double end_energy_ = 0.0;
  bool fsal_ = false;
};

struct BallHit {
  int ball = -1;
  double s_entry = 0.0;
  double s_exit = 0.0;
};

// Earliest ball entered by the straight line x + s p, s > 0.  Grazes with a
// chord shorter than 1e-10 in parameter are ignored; the profile is exactly
// zero on such slivers.
inline BallHit nearest_ball_hit(const HamiltonianField& hf, const Vec& x,
                                const Vec& p) {
  constexpr double kAhead = 1e-12;
  BallHit best;
  best.s_entry = std::numeric_limits<double>::infinity();
  const double a = p.squaredNorm();
  const double rho2 = hf.radius() * hf.radius();
  for (std::size_t i = 0; i < hf.pieces.size(); ++i) {
    const Vec d = x - hf.pieces[i].center;
    const double b = d.dot(p);
    const double c = d.squaredNorm() - rho2;
    const double disc = b * b - a * c;
    if (disc <= 0.0) continue;
    const double sq = std::sqrt(disc);
    const double s1 = (-b - sq) / a;
    const double s2 = (-b + sq) / a;
    if (s2 <= kAhead || s1 <= kAhead) continue;
    if (s2 - s1 <= 1e-10) continue;
    if (s1 < best.s_entry) best = {static_cast<int>(i), s1, s2};
  }
  if (!std::isfinite(best.s_entry)) best.ball = -1;
  return best;
}

// Outward crossing of the sphere |x| = R along x + s p; zero when the point
// already sits outside moving outward.
inline double sphere_exit_param(const Vec& x, const Vec& p, double R) {
  const double a = p.squaredNorm();
  const double b = x.dot(p);
  const double c = x.squaredNorm() - R * R;
  const double disc = std::max(b * b - a * c, 0.0);
  return std::max((-b + std::sqrt(disc)) / a, 0.0);
}

}  // namespace detail

// Integrates the geodesic flow from an entry state outside every ball until
// the trajectory leaves the bounding sphere moving outward.  Outside the
// balls the field is exactly Euclidean, so those stretches advance along the
// straight line directly (any Runge-Kutta step there is exact); inside a ball
// the adaptive Dormand-Prince scheme runs with boundary crossings located by
// sign changes of |x - center| - radius on the dense output, refined by
// bisection.
inline TraceResult integrate(const HamiltonianField& hf,
                             const GeodesicState& s0, double bounding_radius,
                             const IntegratorOptions& opt = {}) {
  const int n = hf.rs.n;
  if (hf.ball_index(s0.x) >= 0)
    throw std::invalid_argument("entry state must start outside every ball");
  if (s0.x.norm() >= bounding_radius)
    throw std::invalid_argument("entry state must start inside the bounding sphere");
  const double e0 = 0.5 * s0.p.squaredNorm();
  if (!(e0 > 0.0))
    throw std::invalid_argument("entry momentum must carry positive energy");

  constexpr double kMinStep = 1e-14;
  const double rho = hf.radius();

  TraceResult res;
  res.entry_line = {s0.x, s0.p.normalized()};

  double t = s0.t;
  Vec x = s0.x;
  Vec p = s0.p;
  auto push_sample = [&](double e) {
    res.polyline.push_back({t, x, p, e});
    res.energy_drift = std::max(res.energy_drift, std::abs(e - e0));
  };
  push_sample(e0);

  detail::FlowRhs rhs(hf);
  detail::Dopri5 stepper(rhs, opt.rel_tol, opt.abs_tol);

  int inside = -1;
  double h = 0.0;
  while (true) {
    if (inside < 0) {
      const detail::BallHit hit = detail::nearest_ball_hit(hf, x, p);
      if (hit.ball < 0) {
        const double s_out = detail::sphere_exit_param(x, p, bounding_radius);
        if (t + s_out > opt.max_param)
          throw EscapeFailure("flow parameter exceeded the cap before leaving "
                              "the bounding sphere");
        x += s_out * p;
        t += s_out;
        push_sample(0.5 * p.squaredNorm());
        break;
      }
      if (t + hit.s_entry > opt.max_param)
        throw EscapeFailure("flow parameter exceeded the cap before leaving "
                            "the bounding sphere");
      x += hit.s_entry * p;
      t += hit.s_entry;
      push_sample(0.5 * p.squaredNorm());
      BallCrossing crossing;
      crossing.ball = hit.ball;
      crossing.t_entry = t;
      crossing.x_entry = x;
      res.crossings.push_back(crossing);
      res.balls_crossed.push_back(hit.ball);
      inside = hit.ball;
      // start strictly inside so the boundary function is negative
      const double nudge = std::min(1e-12 * (1.0 + std::abs(hit.s_entry)),
                                    0.25 * (hit.s_exit - hit.s_entry));
      x += nudge * p;
      t += nudge;
      rhs.set_hint(inside);
      stepper = detail::Dopri5(rhs, opt.rel_tol, opt.abs_tol);
      Vec y(2 * n);
      y << x, p;
      stepper.prime(y);
      h = rho / (50.0 * p.norm());
      continue;
    }

    const double err = stepper.attempt(h);
    if (err > 1.0) {
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      if (h < kMinStep)
        throw StepFailure("step size underflow inside ball " +
                          std::to_string(inside));
      continue;
    }

    // exit detection on the dense output
    const Vec& center = hf.pieces[static_cast<std::size_t>(inside)].center;
    auto boundary = [&](double theta) {
      return (stepper.dense(theta).head(n) - center).norm() - rho;
    };
    constexpr int kScan = 16;
    double theta_out = -1.0, theta_in = 0.0;
    for (int i = 1; i <= kScan; ++i) {
      const double th = static_cast<double>(i) / kScan;
      if (boundary(th) >= 0.0) {
        theta_out = th;
        break;
      }
      theta_in = th;
    }
    if (theta_out >= 0.0) {
      for (int it = 0; it < 100 && theta_out - theta_in > 1e-14; ++it) {
        const double mid = 0.5 * (theta_in + theta_out);
        (boundary(mid) >= 0.0 ? theta_out : theta_in) = mid;
      }
      const Vec y_exit = stepper.dense(theta_out);
      x = y_exit.head(n);
      p = y_exit.tail(n);
      t += theta_out * h;
      res.crossings.back().t_exit = t;
      res.crossings.back().x_exit = x;
      push_sample(0.5 * p.squaredNorm());
      inside = -1;
      rhs.set_hint(-1);
      continue;
    }

    stepper.accept();
    t += h;
    x = stepper.current().head(n);
    p = stepper.current().tail(n);
    push_sample(stepper.end_energy());
    if (t > opt.max_param)
      throw EscapeFailure("flow parameter exceeded the cap inside the obstacle");
    const double grow = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    h *= std::min(5.0, std::max(0.2, grow));
  }

  res.exit_line = {x, p.normalized()};
  res.time_delay =
      t - (s0.t + detail::sphere_exit_param(s0.x, s0.p, bounding_radius));
  return res;
}

}  // namespace invis

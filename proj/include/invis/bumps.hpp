#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "invis/common.hpp"

namespace invis {
namespace detail {

// Radial profile psi(r) = exp(1 - 1/(1 - r^2)) for r < 1, zero outside.
// The returned ratios stay finite through r = 0:
//   slope_ratio = psi'(r)/r           = -2 psi / (1 - r^2)^2
//   curv_ratio  = (psi'' - psi'/r)/r^2 =  4 psi (2 r^2 - 1) / (1 - r^2)^4
// Once the exponent drops below the smallest-normal cutoff everything is
// clamped to exact zero, which keeps the support edge free of denormal noise.
struct RadialEval {
  double value = 0.0;
  double slope_ratio = 0.0;
  double curv_ratio = 0.0;
};

inline RadialEval mollifier(double r) {
  if (r >= 1.0) return {};
  const double t = 1.0 - r * r;
  const double expo = 1.0 - 1.0 / t;
  if (expo < -700.0) return {};
  const double psi = std::exp(expo);
  const double it2 = 1.0 / (t * t);
  return {psi, -2.0 * psi * it2, 4.0 * psi * (2.0 * r * r - 1.0) * it2 * it2};
}

struct ProfileBounds {
  double max_abs_dpsi = 0.0;   // sup_r |psi'(r)|
  double max_hess_ratio = 0.0; // sup_r max(|psi''(r)|, |psi'(r)/r|)
};

inline const ProfileBounds& mollifier_bounds() {
  static const ProfileBounds bounds = [] {
    ProfileBounds b;
    const int samples = 200000;
    for (int i = 0; i <= samples; ++i) {
      const double r = static_cast<double>(i) / samples;
      const RadialEval e = mollifier(r);
      const double dpsi = e.slope_ratio * r;
      const double d2psi = e.curv_ratio * r * r + e.slope_ratio;
      b.max_abs_dpsi = std::max(b.max_abs_dpsi, std::abs(dpsi));
      b.max_hess_ratio = std::max({b.max_hess_ratio, std::abs(d2psi),
                                   std::abs(e.slope_ratio)});
    }
    return b;
  }();
  return bounds;
}

}  // namespace detail

// One smooth compactly supported bump per root, phi_i(x) = a_i psi(|x-c|/rho),
// all sharing the base ball B(center, radius).  Values and derivatives vanish
// identically outside the ball.
struct BumpSet {
  Vec center;
  double radius = 1.0;
  std::vector<double> amplitudes;
  std::string profile = "mollifier";

  double phi(int i, const Vec& x) const {
    const double r = (x - center).norm() / radius;
    return amplitudes[static_cast<std::size_t>(i)] * detail::mollifier(r).value;
  }

  Vec grad_phi(int i, const Vec& x) const {
    const Vec d = x - center;
    const double r = d.norm() / radius;
    const detail::RadialEval e = detail::mollifier(r);
    const double a = amplitudes[static_cast<std::size_t>(i)];
    return (a * e.slope_ratio / (radius * radius)) * d;
  }

  Mat hess_phi(int i, const Vec& x) const {
    const Vec d = x - center;
    const double r = d.norm() / radius;
    const detail::RadialEval e = detail::mollifier(r);
    const double a = amplitudes[static_cast<std::size_t>(i)];
    const double rho2 = radius * radius;
    const double radial = a * e.curv_ratio / (rho2 * rho2);
    const double trace = a * e.slope_ratio / rho2;
    const auto n = x.size();
    Mat h(n, n);
    for (Eigen::Index p = 0; p < n; ++p) {
      h(p, p) = radial * d[p] * d[p] + trace;
      for (Eigen::Index q = p + 1; q < n; ++q)
        h(p, q) = h(q, p) = radial * d[p] * d[q];
    }
    return h;
  }

  double max_abs_amplitude() const {
    double m = 0.0;
    for (double a : amplitudes) m = std::max(m, std::abs(a));
    return m;
  }

  // sup_x |grad phi_i(x)| over all i; used by admissibility diagnostics.
  double grad_bound() const {
    return max_abs_amplitude() * detail::mollifier_bounds().max_abs_dpsi /
           radius;
  }

  // sup_x of the spectral norm of hess phi_i(x) over all i.
  double hess_bound() const {
    return max_abs_amplitude() * detail::mollifier_bounds().max_hess_ratio /
           (radius * radius);
  }
};

}  // namespace invis

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invis/common.hpp"

namespace invis {

// Positive roots of A_n realized in R^n.  The hyperplane
// {x_1 + ... + x_{n+1} = 0} of R^{n+1} is identified with R^n through a fixed
// orthonormal basis obtained by Gram-Schmidt on e_1 - e_{n+1}, ...,
// e_n - e_{n+1}.  Roots are ordered so that the first n are the images of
// e_i - e_{n+1} and the rest are the differences v_k - v_l, k < l, in
// lexicographic order.  All indices are 0-based.
struct RootSystem {
  int n = 0;               // ambient dimension
  int N = 0;               // number of positive roots, n(n+1)/2
  std::vector<Vec> roots;  // length N, every root has norm sqrt(2)
  Mat embedding;           // n x (n+1), orthonormal rows

  // Index of the root v_k - v_l for 0 <= k < l < n; lands in [n, N).
  int pair_index(int k, int l) const {
    return n + k * (n - 1) - k * (k - 1) / 2 + (l - k - 1);
  }
};

inline RootSystem build_roots(int n) {
  if (n < 2)
    throw ConfigInvalid("dimension must be at least 2, got " +
                        std::to_string(n));
  RootSystem rs;
  rs.n = n;
  rs.N = n * (n + 1) / 2;

  // Orthonormalize the images of e_i - e_{n+1}.
  Mat basis(n, n + 1);
  for (int i = 0; i < n; ++i) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n + 1);
    e(i) = 1.0;
    e(n) = -1.0;
    for (int j = 0; j < i; ++j) e -= e.dot(basis.row(j)) * basis.row(j);
    basis.row(i) = e / e.norm();
  }
  rs.embedding = basis;

  rs.roots.reserve(rs.N);
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n + 1);
    e(i) = 1.0;
    e(n) = -1.0;
    rs.roots.push_back(rs.embedding * e);
  }
  // Difference roots reuse the embedded basis vectors so that
  // roots[pair_index(k, l)] == roots[k] - roots[l] holds exactly.
  for (int k = 0; k < n; ++k)
    for (int l = k + 1; l < n; ++l) rs.roots.push_back(rs.roots[k] - rs.roots[l]);
  return rs;
}

// Reflection through the hyperplane orthogonal to v.
inline Mat reflection(const Vec& v) {
  const auto dim = v.size();
  return Mat::Identity(dim, dim) -
         (2.0 / v.squaredNorm()) * (v * v.transpose());
}

// The reflection group generated by one reflection per positive root,
// together with a base point strictly inside the fundamental chamber and its
// orbit (the ball centers).  elements[0] is the identity and centers[i] is
// elements[i] applied to chamber_point.
struct WeylGroup {
  std::vector<Mat> elements;
  std::vector<Mat> generators;
  Vec chamber_point;
  std::vector<Vec> centers;
};

// Unit vector w with (w, v) > 0 for every positive root v.  Solving
// (w, v_j) = n - j over the basis roots gives (w, v_k - v_l) = l - k > 0 for
// the difference roots, so w avoids every wall.
inline Vec default_chamber_point(const RootSystem& rs) {
  Mat vt(rs.n, rs.n);
  Vec margins(rs.n);
  for (int j = 0; j < rs.n; ++j) {
    vt.row(j) = rs.roots[j].transpose();
    margins(j) = static_cast<double>(rs.n - j);
  }
  Vec w = vt.partialPivLu().solve(margins);
  return w / w.norm();
}

inline std::vector<Vec> orbit(const std::vector<Mat>& elements, const Vec& p) {
  std::vector<Vec> points;
  points.reserve(elements.size());
  for (const Mat& g : elements) points.push_back(g * p);
  return points;
}

inline WeylGroup build_weyl_group(const RootSystem& rs) {
  WeylGroup w;
  w.generators.reserve(rs.N);
  for (const Vec& v : rs.roots) w.generators.push_back(reflection(v));

  std::uint64_t expected = 1;
  for (int i = 2; i <= rs.n + 1; ++i) expected *= static_cast<std::uint64_t>(i);

  // Breadth-first closure with matrix-distance dedup.
  constexpr double kDedupTol = 1e-9;
  auto known = [&](const Mat& cand) {
    for (const Mat& e : w.elements)
      if ((e - cand).cwiseAbs().maxCoeff() < kDedupTol) return true;
    return false;
  };
  w.elements.push_back(Mat::Identity(rs.n, rs.n));
  for (std::size_t head = 0; head < w.elements.size(); ++head) {
    if (w.elements.size() > expected)
      throw std::runtime_error(
          "group closure exceeded the expected order; "
          "generator construction is inconsistent");
    const Mat current = w.elements[head];
    for (const Mat& g : w.generators) {
      Mat cand = current * g;
      if (!known(cand)) w.elements.push_back(std::move(cand));
    }
  }
  if (w.elements.size() != expected)
    throw std::runtime_error(
        "group closure terminated at " + std::to_string(w.elements.size()) +
        " elements, expected " + std::to_string(expected));

  w.chamber_point = default_chamber_point(rs);
  w.centers = orbit(w.elements, w.chamber_point);
  return w;
}

}  // namespace invis

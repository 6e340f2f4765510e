#include "mvalign/hull.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <utility>

namespace mvalign {

namespace {

struct Face {
  Triangle v;
  Vec3 normal;
  double offset;  // normal · x = offset on the plane
  bool alive = true;
};

Face make_face(std::span<const Vec3> p, int a, int b, int c) {
  Face f{{a, b, c}, (p[b] - p[a]).cross(p[c] - p[a]), 0.0};
  f.normal.normalize();
  f.offset = f.normal.dot(p[a]);
  return f;
}

std::vector<int> distinct_indices(std::span<const Vec3> points) {
  std::vector<int> out;
  std::set<std::array<double, 3>> seen;
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    if (seen.insert({points[i].x(), points[i].y(), points[i].z()}).second) out.push_back(i);
  }
  return out;
}

}  // namespace

ConvexHull convex_hull(std::span<const Vec3> points) {
  ConvexHull hull;
  const int n = static_cast<int>(points.size());
  if (n < 4) {
    hull.vertex_indices = distinct_indices(points);
    return hull;
  }

  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double eps = 1e-10 * std::max((hi - lo).norm(), 1e-300);

  // Initial tetrahedron from extreme points.
  int i0 = 0;
  for (int i = 1; i < n; ++i) {
    if (points[i].x() < points[i0].x()) i0 = i;
  }
  int i1 = -1;
  double best = eps;
  for (int i = 0; i < n; ++i) {
    const double d = (points[i] - points[i0]).norm();
    if (d > best) best = d, i1 = i;
  }
  int i2 = -1;
  best = eps;
  if (i1 >= 0) {
    const Vec3 dir = (points[i1] - points[i0]).normalized();
    for (int i = 0; i < n; ++i) {
      const double d = (points[i] - points[i0]).cross(dir).norm();
      if (d > best) best = d, i2 = i;
    }
  }
  int i3 = -1;
  best = eps;
  if (i2 >= 0) {
    const Vec3 nrm = (points[i1] - points[i0]).cross(points[i2] - points[i0]).normalized();
    for (int i = 0; i < n; ++i) {
      const double d = std::abs(nrm.dot(points[i] - points[i0]));
      if (d > best) best = d, i3 = i;
    }
  }
  if (i3 < 0) {
    hull.vertex_indices = distinct_indices(points);
    return hull;
  }

  const Vec3 interior = 0.25 * (points[i0] + points[i1] + points[i2] + points[i3]);
  std::vector<Face> faces;
  auto add_oriented = [&](int a, int b, int c) {
    Face f = make_face(points, a, b, c);
    if (f.normal.dot(interior) - f.offset > 0.0) f = make_face(points, a, c, b);
    faces.push_back(f);
  };
  add_oriented(i0, i1, i2);
  add_oriented(i0, i1, i3);
  add_oriented(i0, i2, i3);
  add_oriented(i1, i2, i3);

  for (int pi = 0; pi < n; ++pi) {
    if (pi == i0 || pi == i1 || pi == i2 || pi == i3) continue;
    const Vec3& p = points[pi];
    std::set<std::pair<int, int>> visible_edges;
    bool any = false;
    for (auto& f : faces) {
      if (!f.alive) continue;
      if (f.normal.dot(p) - f.offset > eps) {
        f.alive = false;
        any = true;
        for (int k = 0; k < 3; ++k) visible_edges.insert({f.v[k], f.v[(k + 1) % 3]});
      }
    }
    if (!any) continue;
    for (const auto& [a, b] : visible_edges) {
      if (!visible_edges.contains({b, a})) faces.push_back(make_face(points, a, b, pi));
    }
  }

  std::set<int> used;
  for (const auto& f : faces) {
    if (!f.alive) continue;
    hull.faces.push_back(f.v);
    used.insert(f.v.begin(), f.v.end());
  }
  hull.vertex_indices.assign(used.begin(), used.end());
  return hull;
}

}  // namespace mvalign

#pragma once

#include <array>
#include <span>
#include <vector>

#include "mvalign/geometry.hpp"

namespace mvalign {

using Triangle = std::array<int, 3>;

/// Convex hull of a point set. Indices refer to the input span; faces are
/// wound counter-clockwise seen from outside. Degenerate (coplanar or
/// smaller) inputs yield every distinct input index and no faces.
struct ConvexHull {
  std::vector<int> vertex_indices;
  std::vector<Triangle> faces;
};

ConvexHull convex_hull(std::span<const Vec3> points);

}  // namespace mvalign

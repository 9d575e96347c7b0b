#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "core/face_template.hpp"

namespace engage {

using Triangle = std::array<std::size_t, 3>;

inline constexpr double kInCircleEpsilon = 1e-12;

/// Twice the signed area of (a, b, c); positive when counter-clockwise.
double orient2d(const Point2& a, const Point2& b, const Point2& c) noexcept;

/// Positive when d lies strictly inside the circumcircle of the
/// counter-clockwise triangle (a, b, c).
double in_circle(const Point2& a, const Point2& b, const Point2& c,
                 const Point2& d) noexcept;

/// Bowyer-Watson triangulation with a bounding super-triangle, followed by
/// convex-hull completion and a flip pass. Triangles come back
/// counter-clockwise, each sorted by rotation so its smallest index is first,
/// and the list is sorted. Cocircular quads use the diagonal incident to the
/// lowest vertex index.
///
/// Throws kValidation for fewer than three or duplicate points and
/// kDegenerate when all points are collinear.
std::vector<Triangle> delaunay_triangulate(std::span<const Point2> points);

}  // namespace engage

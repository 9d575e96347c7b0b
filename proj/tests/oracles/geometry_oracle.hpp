#pragma once

// Brute-force checks for planar triangulations in long double.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "core/delaunay.hpp"

namespace oracle {

using LD = long double;

inline LD orient(const engage::Point2& a, const engage::Point2& b, const engage::Point2& c) {
  return (static_cast<LD>(b.x) - a.x) * (static_cast<LD>(c.y) - a.y) -
         (static_cast<LD>(b.y) - a.y) * (static_cast<LD>(c.x) - a.x);
}

// Positive when d is inside the circumcircle of counter-clockwise (a, b, c).
inline LD incircle(const engage::Point2& a, const engage::Point2& b, const engage::Point2& c,
                   const engage::Point2& d) {
  const LD adx = static_cast<LD>(a.x) - d.x, ady = static_cast<LD>(a.y) - d.y;
  const LD bdx = static_cast<LD>(b.x) - d.x, bdy = static_cast<LD>(b.y) - d.y;
  const LD cdx = static_cast<LD>(c.x) - d.x, cdy = static_cast<LD>(c.y) - d.y;
  const LD ad = adx * adx + ady * ady, bd = bdx * bdx + bdy * bdy, cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

// Andrew's monotone chain; collinear boundary points are excluded.
inline std::vector<std::size_t> convex_hull(const std::vector<engage::Point2>& pts) {
  std::vector<std::size_t> idx(pts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return pts[a].x < pts[b].x || (pts[a].x == pts[b].x && pts[a].y < pts[b].y);
  });
  std::vector<std::size_t> hull(2 * idx.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    while (k >= 2 && orient(pts[hull[k - 2]], pts[hull[k - 1]], pts[idx[i]]) <= 0) --k;
    hull[k++] = idx[i];
  }
  for (std::size_t i = idx.size() - 1, lo = k + 1; i-- > 0;) {
    while (k >= lo && orient(pts[hull[k - 2]], pts[hull[k - 1]], pts[idx[i]]) <= 0) --k;
    hull[k++] = idx[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Points on the hull boundary, counting those in the interior of hull edges.
inline std::size_t boundary_count(const std::vector<engage::Point2>& pts) {
  const auto hull = convex_hull(pts);
  std::size_t count = 0;
  for (const auto& p : pts) {
    for (std::size_t e = 0; e < hull.size(); ++e) {
      const auto& a = pts[hull[e]];
      const auto& b = pts[hull[(e + 1) % hull.size()]];
      const bool inside_box = std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
                              std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
      if (inside_box && orient(a, b, p) == 0) {
        ++count;
        break;
      }
    }
  }
  return count;
}

struct TriangulationReport {
  bool all_ccw = true;
  bool empty_circles = true;
  bool euler_edges = true;
  bool euler_faces = true;
  bool manifold_edges = true;
  std::size_t edges = 0;
  std::size_t hull = 0;
};

// `rel_tol` scales the in-circle tolerance by the magnitude of its terms so
// cocircular neighbours do not count as violations.
inline TriangulationReport check_triangulation(const std::vector<engage::Point2>& pts,
                                               const std::vector<engage::Triangle>& tris,
                                               LD rel_tol = 1e-9L) {
  TriangulationReport r;
  std::map<std::pair<std::size_t, std::size_t>, int> edge_use;
  for (const auto& t : tris) {
    if (orient(pts[t[0]], pts[t[1]], pts[t[2]]) <= 0) r.all_ccw = false;
    for (int e = 0; e < 3; ++e) {
      auto a = t[static_cast<std::size_t>(e)], b = t[static_cast<std::size_t>((e + 1) % 3)];
      if (a > b) std::swap(a, b);
      ++edge_use[{a, b}];
    }
    LD span = 0;
    for (auto v : t) span = std::max({span, std::abs(static_cast<LD>(pts[v].x)), std::abs(static_cast<LD>(pts[v].y))});
    for (std::size_t d = 0; d < pts.size(); ++d) {
      if (d == t[0] || d == t[1] || d == t[2]) continue;
      LD scale = std::max(span, std::max(std::abs(static_cast<LD>(pts[d].x)), std::abs(static_cast<LD>(pts[d].y))));
      const LD tol = rel_tol * scale * scale * scale * scale;
      if (incircle(pts[t[0]], pts[t[1]], pts[t[2]], pts[d]) > tol) r.empty_circles = false;
    }
  }
  for (const auto& [e, n] : edge_use)
    if (n < 1 || n > 2) r.manifold_edges = false;
  r.edges = edge_use.size();
  r.hull = boundary_count(pts);
  const std::size_t n = pts.size();
  r.euler_edges = r.edges == 3 * n - 3 - r.hull;
  r.euler_faces = tris.size() == 2 * n - 2 - r.hull;
  return r;
}

}  // namespace oracle

#include "core/delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "core/error.hpp"

namespace engage {

double orient2d(const Point2& a, const Point2& b, const Point2& c) noexcept {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

double in_circle(const Point2& a, const Point2& b, const Point2& c,
                 const Point2& d) noexcept {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) +
         ad * (bdx * cdy - bdy * cdx);
}

namespace {

using Edge = std::pair<std::size_t, std::size_t>;

struct Mesh {
  std::vector<Point2> pts;
  std::vector<Triangle> tris;

  // Directed edge -> (triangle index, position of the edge's first vertex).
  std::map<Edge, std::size_t> edge_owner() const {
    std::map<Edge, std::size_t> owner;
    for (std::size_t t = 0; t < tris.size(); ++t) {
      for (int e = 0; e < 3; ++e) owner[{tris[t][e], tris[t][(e + 1) % 3]}] = t;
    }
    return owner;
  }
};

std::size_t opposite(const Triangle& t, std::size_t a, std::size_t b) {
  for (auto v : t) {
    if (v != a && v != b) return v;
  }
  return t[0];
}

void bowyer_watson(Mesh& mesh, std::size_t n) {
  double min_x = mesh.pts[0].x, max_x = min_x, min_y = mesh.pts[0].y, max_y = min_y;
  for (std::size_t i = 0; i < n; ++i) {
    min_x = std::min(min_x, mesh.pts[i].x);
    max_x = std::max(max_x, mesh.pts[i].x);
    min_y = std::min(min_y, mesh.pts[i].y);
    max_y = std::max(max_y, mesh.pts[i].y);
  }
  const double cx = 0.5 * (min_x + max_x), cy = 0.5 * (min_y + max_y);
  const double span = std::max({max_x - min_x, max_y - min_y, 1e-9});
  const double m = 1e5 * span;
  mesh.pts.push_back({cx - 2.0 * m, cy - m});
  mesh.pts.push_back({cx + 2.0 * m, cy - m});
  mesh.pts.push_back({cx, cy + 2.0 * m});
  mesh.tris = {{n, n + 1, n + 2}};

  for (std::size_t p = 0; p < n; ++p) {
    const Point2& q = mesh.pts[p];
    std::vector<Triangle> keep;
    std::map<Edge, int> cavity_edges;
    for (const auto& t : mesh.tris) {
      if (in_circle(mesh.pts[t[0]], mesh.pts[t[1]], mesh.pts[t[2]], q) > kInCircleEpsilon) {
        for (int e = 0; e < 3; ++e) cavity_edges[{t[e], t[(e + 1) % 3]}] += 1;
      } else {
        keep.push_back(t);
      }
    }
    for (const auto& [edge, count] : cavity_edges) {
      if (cavity_edges.count({edge.second, edge.first})) continue;  // interior
      keep.push_back({edge.first, edge.second, p});
    }
    mesh.tris = std::move(keep);
  }

  std::erase_if(mesh.tris, [n](const Triangle& t) {
    return t[0] >= n || t[1] >= n || t[2] >= n;
  });
  mesh.pts.resize(n);
}

bool point_in_triangle(const Point2& a, const Point2& b, const Point2& c, const Point2& p) {
  return orient2d(a, b, p) >= 0.0 && orient2d(b, c, p) >= 0.0 && orient2d(c, a, p) >= 0.0;
}

// A super-triangle of finite size can leave pockets between the triangulated
// region and the convex hull. Walk the boundary and clip ears at reflex
// vertices until the boundary is convex.
void fill_to_convex_hull(Mesh& mesh) {
  for (std::size_t guard = 0; guard < 4 * mesh.pts.size() + 8; ++guard) {
    const auto owner = mesh.edge_owner();
    std::map<std::size_t, std::size_t> next, prev;
    for (const auto& [edge, t] : owner) {
      if (owner.count({edge.second, edge.first})) continue;
      next[edge.first] = edge.second;
      prev[edge.second] = edge.first;
    }
    bool added = false;
    for (const auto& [v, w] : next) {
      const std::size_t u = prev.at(v);
      const auto& pu = mesh.pts[u];
      const auto& pv = mesh.pts[v];
      const auto& pw = mesh.pts[w];
      if (orient2d(pu, pv, pw) >= -kInCircleEpsilon) continue;
      bool empty = true;
      for (std::size_t i = 0; i < mesh.pts.size() && empty; ++i) {
        if (i == u || i == v || i == w) continue;
        if (point_in_triangle(pu, pw, pv, mesh.pts[i])) empty = false;
      }
      if (!empty) continue;
      mesh.tris.push_back({u, w, v});
      added = true;
      break;
    }
    if (!added) return;
  }
  raise(ErrorCode::kDegenerate, "hull completion did not converge");
}

bool should_flip(const Mesh& mesh, std::size_t a, std::size_t b, std::size_t c,
                 std::size_t d) {
  const auto& pa = mesh.pts[a];
  const auto& pb = mesh.pts[b];
  const auto& pc = mesh.pts[c];
  const auto& pd = mesh.pts[d];
  // The new diagonal (c, d) must split the quad into two proper triangles.
  if (orient2d(pc, pd, pb) <= 0.0 || orient2d(pd, pc, pa) <= 0.0) return false;
  const double det = in_circle(pa, pb, pc, pd);
  if (det > kInCircleEpsilon) return true;
  if (det < -kInCircleEpsilon) return false;
  return std::min(c, d) < std::min(a, b);
}

void legalize(Mesh& mesh) {
  const std::size_t limit = 64 * (mesh.tris.size() + 4) * (mesh.tris.size() + 4);
  for (std::size_t iter = 0; iter < limit; ++iter) {
    const auto owner = mesh.edge_owner();
    bool flipped = false;
    for (const auto& [edge, t1] : owner) {
      const auto [a, b] = edge;
      auto it = owner.find({b, a});
      if (it == owner.end() || a > b) continue;
      const std::size_t t2 = it->second;
      const std::size_t c = opposite(mesh.tris[t1], a, b);
      const std::size_t d = opposite(mesh.tris[t2], a, b);
      if (!should_flip(mesh, a, b, c, d)) continue;
      // (a, b, c) and (b, a, d) become (c, d, b) and (d, c, a).
      mesh.tris[t1] = {c, d, b};
      mesh.tris[t2] = {d, c, a};
      flipped = true;
      break;
    }
    if (!flipped) return;
  }
  raise(ErrorCode::kDegenerate, "edge flipping did not converge");
}

Triangle canonical(Triangle t) {
  const auto smallest = std::min_element(t.begin(), t.end());
  std::rotate(t.begin(), smallest, t.end());
  return t;
}

}  // namespace

std::vector<Triangle> delaunay_triangulate(std::span<const Point2> points) {
  const std::size_t n = points.size();
  require(n >= 3, ErrorCode::kValidation, "triangulation needs at least 3 points");
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(points[i].x) && std::isfinite(points[i].y), ErrorCode::kValidation,
            "point " + std::to_string(i) + " is not finite");
    for (std::size_t j = 0; j < i; ++j) {
      if (points[i].x == points[j].x && points[i].y == points[j].y) {
        raise(ErrorCode::kValidation, "points " + std::to_string(j) + " and " +
                                          std::to_string(i) + " coincide");
      }
    }
  }
  bool collinear = true;
  for (std::size_t i = 2; i < n && collinear; ++i) {
    if (std::abs(orient2d(points[0], points[1], points[i])) > kInCircleEpsilon) {
      collinear = false;
    }
  }
  if (collinear) raise(ErrorCode::kDegenerate, "all points are collinear");

  Mesh mesh;
  mesh.pts.assign(points.begin(), points.end());
  bowyer_watson(mesh, n);
  fill_to_convex_hull(mesh);
  legalize(mesh);

  std::vector<Triangle> out;
  out.reserve(mesh.tris.size());
  for (const auto& t : mesh.tris) out.push_back(canonical(t));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace engage

#include <set>

#include "../oracles/geometry_oracle.hpp"
#include "core/face_graph.hpp"
#include "core/random.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace engage;

TEST_CASE("unit square triangulates into two ccw triangles") {
  const std::vector<Point2> pts{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const auto tris = delaunay_triangulate(pts);
  REQUIRE(tris.size() == 2);
  // Cocircular: the diagonal touches the lowest index.
  CHECK(tris[0] == Triangle{0, 1, 2});
  CHECK(tris[1] == Triangle{0, 2, 3});
}

TEST_CASE("triangulation rejects degenerate input") {
  const std::vector<Point2> two{{0, 0}, {1, 0}};
  CHECK_THROWS_AS(delaunay_triangulate(two), Error);
  const std::vector<Point2> dup{{0, 0}, {1, 0}, {0, 0}, {0, 1}};
  try {
    delaunay_triangulate(dup);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kValidation);
  }
  const std::vector<Point2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  try {
    delaunay_triangulate(line);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerate);
  }
}

TEST_CASE("random sets satisfy the empty-circle and edge-count relations") {
  Rng rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(rng() % 40);
    std::vector<Point2> pts(n);
    for (auto& p : pts) p = {u(rng), u(rng)};
    const auto tris = delaunay_triangulate(pts);
    const auto r = oracle::check_triangulation(pts, tris);
    CHECK(r.all_ccw);
    CHECK(r.empty_circles);
    CHECK(r.manifold_edges);
    CHECK(r.euler_edges);
    CHECK(r.euler_faces);
  }
}

TEST_CASE("grid points with many cocircular quads stay valid and deterministic") {
  std::vector<Point2> pts;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) pts.push_back({static_cast<double>(x), static_cast<double>(y)});
  const auto a = delaunay_triangulate(pts);
  const auto b = delaunay_triangulate(pts);
  CHECK(a == b);
  const auto r = oracle::check_triangulation(pts, a);
  CHECK(r.empty_circles);
  CHECK(a.size() == 2 * 5 * 4);
}

TEST_CASE("face graph is connected, symmetric and simple") {
  const auto& g = default_face_graph();
  CHECK(g.node_count == kNodeCount);
  CHECK(g.is_connected_graph());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& [i, j] : g.edges) {
    CHECK(i < j);
    CHECK(seen.insert({i, j}).second);
    CHECK(g.connected(i, j));
    CHECK(g.connected(j, i));
  }
  for (std::size_t i = 0; i < g.node_count; ++i) CHECK_FALSE(g.connected(i, i));
  // A planar triangulation of 78 points has at most 3n - 6 edges.
  CHECK(g.edges.size() <= 3 * kNodeCount - 6);
  // Every iris point is linked to its own eye region.
  CHECK(g.connected(68, 69));
  CHECK(g.connected(73, 74));
}

TEST_CASE("normalized adjacency with unit mask is symmetric with 1/deg diagonal") {
  const auto& g = default_face_graph();
  const std::size_t n = g.node_count;
  const auto a = normalize_adjacency(g, Tensor<double>({n, n}, 1.0));
  const auto deg = g.degrees();
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(a[i * n + i] == doctest::Approx(1.0 / deg[i]));
    for (std::size_t j = 0; j < n; ++j) CHECK(a[i * n + j] == doctest::Approx(a[j * n + i]));
  }
  // Weights never leave the support of A + I.
  Tensor<double> mask({n, n}, 3.0);
  const auto m = normalize_adjacency(g, mask);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && !g.connected(i, j)) CHECK(m[i * n + j] == 0.0);
}

TEST_CASE("graph export lists nodes, edges and template coordinates") {
  const auto j = nlohmann::json::parse(export_graph_json(default_face_graph()));
  CHECK(j.at("node_count").get<int>() == 78);
  CHECK(j.at("edges").size() == default_face_graph().edges.size());
  CHECK(j.at("template").size() == 78);
}

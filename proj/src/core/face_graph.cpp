#include "core/face_graph.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

namespace engage {

std::vector<double> FaceGraphSpec::degrees() const {
  std::vector<double> deg(node_count, 1.0);
  for (const auto& [i, j] : edges) {
    deg[i] += 1.0;
    deg[j] += 1.0;
  }
  return deg;
}

std::vector<std::pair<std::size_t, std::size_t>> FaceGraphSpec::support() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < node_count; ++i) {
    for (std::size_t j = 0; j < node_count; ++j) {
      if (i == j || connected(i, j)) out.emplace_back(i, j);
    }
  }
  return out;
}

bool FaceGraphSpec::is_connected_graph() const {
  if (node_count == 0) return true;
  std::vector<bool> seen(node_count, false);
  std::vector<std::size_t> stack = {0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    for (std::size_t w = 0; w < node_count; ++w) {
      if (!seen[w] && connected(v, w)) {
        seen[w] = true;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  return reached == node_count;
}

FaceGraphSpec build_adjacency(std::span<const Triangle> triangles, std::size_t node_count) {
  FaceGraphSpec g;
  g.node_count = node_count;
  g.adjacency.assign(node_count * node_count, 0);
  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& t : triangles) {
    for (auto v : t) {
      require(v < node_count, ErrorCode::kOutOfRange,
              "triangle index " + std::to_string(v) + " >= node count " +
                  std::to_string(node_count));
    }
    for (int e = 0; e < 3; ++e) {
      auto a = t[e], b = t[(e + 1) % 3];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      edges.emplace(a, b);
    }
  }
  for (const auto& [a, b] : edges) {
    g.adjacency[a * node_count + b] = 1;
    g.adjacency[b * node_count + a] = 1;
  }
  g.edges.assign(edges.begin(), edges.end());
  return g;
}

const FaceGraphSpec& default_face_graph() {
  static const FaceGraphSpec graph = [] {
    const auto& pts = face_template_2d();
    const auto tris = delaunay_triangulate(pts);
    return build_adjacency(tris, kNodeCount);
  }();
  return graph;
}

std::string export_graph_json(const FaceGraphSpec& graph) {
  nlohmann::json j;
  j["node_count"] = graph.node_count;
  auto edges = nlohmann::json::array();
  for (const auto& [a, b] : graph.edges) edges.push_back({a, b});
  j["edges"] = std::move(edges);
  if (graph.node_count == kNodeCount) {
    auto coords = nlohmann::json::array();
    for (const auto& p : face_template_2d()) coords.push_back({p.x, p.y});
    j["template"] = std::move(coords);
  }
  return j.dump(2) + "\n";
}

}  // namespace engage

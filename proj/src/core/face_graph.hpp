#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/delaunay.hpp"
#include "core/tensor.hpp"

namespace engage {

/// Intra-frame connectivity. Inter-frame edges (each node to itself in the
/// next frame) are not stored; the temporal convolution realizes them.
struct FaceGraphSpec {
  std::size_t node_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j, sorted
  std::vector<std::uint8_t> adjacency;                     // node_count^2, 0/1

  bool connected(std::size_t i, std::size_t j) const {
    return adjacency[i * node_count + j] != 0;
  }
  /// Λ_ii = Σ_j (A + I)_ij.
  std::vector<double> degrees() const;
  /// Row-major (i, j) pairs where (A + I) is nonzero.
  std::vector<std::pair<std::size_t, std::size_t>> support() const;
  bool is_connected_graph() const;
};

FaceGraphSpec build_adjacency(std::span<const Triangle> triangles, std::size_t node_count);

/// Graph built once from the canonical 2D face template.
const FaceGraphSpec& default_face_graph();

/// Λ^(-1/2) ((A + I) ⊙ M) Λ^(-1/2). Λ depends on A only.
template <class Real>
Tensor<Real> normalize_adjacency(const FaceGraphSpec& graph, const Tensor<Real>& mask) {
  const std::size_t n = graph.node_count;
  require_shape(mask.shape(), {n, n}, "adjacency mask");
  const auto deg = graph.degrees();
  Tensor<Real> out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = (i == j || graph.connected(i, j)) ? 1.0 : 0.0;
      if (a == 0.0) continue;
      out[i * n + j] = static_cast<Real>(static_cast<double>(mask[i * n + j]) /
                                         std::sqrt(deg[i] * deg[j]));
    }
  }
  return out;
}

/// JSON document with node count, edge list and template coordinates.
std::string export_graph_json(const FaceGraphSpec& graph);

}  // namespace engage

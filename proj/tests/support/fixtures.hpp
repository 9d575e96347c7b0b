#pragma once

// Small graphs, networks and tensors shared by the unit tests and the
// acceptance harness.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "core/delaunay.hpp"
#include "core/face_graph.hpp"
#include "core/random.hpp"
#include "core/stgcn.hpp"

namespace fixtures {

inline engage::Tensor<double> random_tensor(engage::Shape shape, engage::Rng& rng,
                                            double lo = -1.0, double hi = 1.0) {
  engage::Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

inline std::vector<engage::Point2> random_points(std::size_t n, engage::Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<engage::Point2> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng)};
  return pts;
}

/// Delaunay graph over n random points.
inline engage::FaceGraphSpec random_graph(std::size_t n, engage::Rng& rng) {
  const auto pts = random_points(n, rng);
  const auto tris = engage::delaunay_triangulate(pts);
  return engage::build_adjacency(tris, n);
}

/// Perturbs every parameter block and BN statistic so that no initializer
/// value (zero bias, unit gamma, unit mask) hides a wiring mistake.
template <class Real>
void scramble(engage::StgcnNetwork<Real>& net, engage::Rng& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& b : net.blocks()) {
    const bool positive = b.name.find("mask") != std::string::npos ||
                          b.name.find("gamma") != std::string::npos;
    for (std::size_t i = 0; i < b.value.size(); ++i)
      b.value[i] = static_cast<Real>(positive ? 1.0 + u(rng) : b.value[i] + u(rng));
  }
  for (auto& [name, st] : net.bn_stats()) {
    for (std::size_t i = 0; i < st.mean.size(); ++i) {
      st.mean[i] = static_cast<Real>(u(rng));
      st.var[i] = static_cast<Real>(1.0 + u(rng));
    }
  }
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("engage_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace fixtures

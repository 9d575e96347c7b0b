#pragma once

#include <string>
#include <vector>

#include "core/stgcn.hpp"

namespace engage {

/// Per-(frame, node) evidence for one class, normalized to [0, 1].
struct SaliencyMap {
  std::string sample_id;
  int target_class = 0;
  std::size_t frames = 0;
  std::size_t nodes = 0;
  std::vector<double> values;  // row-major frames x nodes

  double at(std::size_t t, std::size_t n) const { return values[t * nodes + n]; }
};

/// Grad-CAM on one sample's last-layer features F (C, T, N) and the gradient
/// g of the target score with respect to F: α_c = mean_{t,n} g_c,
/// S = max(0, Σ_c α_c F_c), divided by max S when that is positive.
template <class Real>
SaliencyMap grad_cam_from(const Tensor<Real>& features, const Tensor<Real>& grads);

/// Runs the network in eval mode on an already preprocessed sample. For
/// K-class heads the target score is logit k. With binary heads, k >= 1 uses
/// head y>k-1 and k = 0 uses the negated head y>0.
template <class Real>
SaliencyMap grad_cam(StgcnNetwork<Real>& net, const LandmarkSequence& sample, int target_class);

std::string saliency_to_json(const SaliencyMap& map);

/// Node coordinates with their saliency per frame, for external plotting.
std::string saliency_point_cloud_json(const SaliencyMap& map, const LandmarkSequence& sample);

}  // namespace engage

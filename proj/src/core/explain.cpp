#include "core/explain.hpp"

#include <algorithm>

#include "json.hpp"

namespace engage {

template <class Real>
SaliencyMap grad_cam_from(const Tensor<Real>& features, const Tensor<Real>& grads) {
  require_shape(grads.shape(), features.shape(), "grad-cam gradient");
  Shape s = features.shape();
  if (s.size() == 4) {
    require(s[0] == 1, ErrorCode::kShape, "grad-cam works on a single sample");
    s.erase(s.begin());
  }
  require(s.size() == 3, ErrorCode::kShape, "grad-cam features must be (C, T, N)");
  const std::size_t C = s[0], T = s[1], N = s[2], P = T * N;
  std::vector<double> alpha(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (std::size_t p = 0; p < P; ++p) sum += grads[c * P + p];
    alpha[c] = sum / static_cast<double>(P);
  }
  SaliencyMap map;
  map.frames = T;
  map.nodes = N;
  map.values.assign(P, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    if (alpha[c] == 0.0) continue;
    for (std::size_t p = 0; p < P; ++p) map.values[p] += alpha[c] * features[c * P + p];
  }
  double peak = 0.0;
  for (auto& v : map.values) {
    v = std::max(0.0, v);
    peak = std::max(peak, v);
  }
  if (peak > 0.0) {
    for (auto& v : map.values) v /= peak;
  }
  return map;
}

template <class Real>
SaliencyMap grad_cam(StgcnNetwork<Real>& net, const LandmarkSequence& sample, int target_class) {
  const int K = net.arch().classes;
  require(target_class >= 0 && target_class < K, ErrorCode::kOutOfRange,
          "target class " + std::to_string(target_class) + " outside 0.." + std::to_string(K - 1));
  const LandmarkSequence* one[] = {&sample};
  const auto input = batch_from_sequences<Real>(std::span<const LandmarkSequence* const>(one));

  ad::Tape<Real> tape;
  tape.set_param_grads(ad::Tape<Real>::ParamGrads::kNone);
  auto out = net.forward(tape, input, ad::Mode::kEval, 0, /*input_requires_grad=*/true);
  Tensor<Real> seed(out.logits.shape());
  if (net.arch().head_mode == HeadMode::kClass) {
    seed[static_cast<std::size_t>(target_class)] = Real{1};
  } else if (target_class == 0) {
    seed[0] = Real{-1};
  } else {
    seed[static_cast<std::size_t>(target_class - 1)] = Real{1};
  }
  tape.backward(out.logits, seed);
  auto map = grad_cam_from(out.features.value(), out.features.grad());
  map.sample_id = sample.sample_id;
  map.target_class = target_class;
  return map;
}

template SaliencyMap grad_cam_from(const Tensor<float>&, const Tensor<float>&);
template SaliencyMap grad_cam_from(const Tensor<double>&, const Tensor<double>&);
template SaliencyMap grad_cam(StgcnNetwork<float>&, const LandmarkSequence&, int);
template SaliencyMap grad_cam(StgcnNetwork<double>&, const LandmarkSequence&, int);

std::string saliency_to_json(const SaliencyMap& map) {
  nlohmann::json j;
  j["sample_id"] = map.sample_id;
  j["class"] = map.target_class;
  j["T"] = map.frames;
  j["N"] = map.nodes;
  j["values"] = map.values;
  return j.dump() + "\n";
}

std::string saliency_point_cloud_json(const SaliencyMap& map, const LandmarkSequence& sample) {
  require(sample.frames == map.frames && sample.nodes == map.nodes, ErrorCode::kShape,
          "point cloud sample does not match the saliency map");
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t t = 0; t < map.frames; ++t) {
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t n = 0; n < map.nodes; ++n) {
      pts.push_back({sample.at(t, n, 0), sample.at(t, n, 1), sample.at(t, n, 2), map.at(t, n)});
    }
    frames.push_back({{"frame", t}, {"valid", sample.valid[t] != 0}, {"points", std::move(pts)}});
  }
  nlohmann::json j;
  j["sample_id"] = map.sample_id;
  j["class"] = map.target_class;
  j["columns"] = {"x", "y", "z", "saliency"};
  j["frames"] = std::move(frames);
  return j.dump() + "\n";
}

}  // namespace engage

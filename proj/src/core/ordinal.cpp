#include "core/ordinal.hpp"

#include <algorithm>

namespace engage {

BinaryLabelSet binarize_labels(std::span<const int> labels, int classes) {
  require(classes >= 2, ErrorCode::kValidation, "ordinal decomposition needs K >= 2");
  BinaryLabelSet out;
  out.classes = classes;
  out.labels.assign(static_cast<std::size_t>(classes - 1), std::vector<int>(labels.size(), 0));
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const int y = labels[s];
    require(y >= 0 && y < classes, ErrorCode::kOutOfRange,
            "label " + std::to_string(y) + " outside 0.." + std::to_string(classes - 1));
    for (int i = 0; i + 1 < classes; ++i) out.labels[static_cast<std::size_t>(i)][s] = y > i ? 1 : 0;
  }
  return out;
}

int argmax_lowest(std::span<const double> values, double tie_tol) {
  require(!values.empty(), ErrorCode::kValidation, "argmax of an empty vector");
  const double best = *std::max_element(values.begin(), values.end());
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] >= best - tie_tol) return static_cast<int>(k);
  }
  return 0;
}

OrdinalDecode decode_ordinal(std::span<const double> p) {
  require(!p.empty(), ErrorCode::kValidation, "ordinal decode needs at least one probability");
  for (double v : p) {
    require(v >= 0.0 && v <= 1.0, ErrorCode::kOutOfRange,
            "binary probability " + std::to_string(v) + " outside [0, 1]");
  }
  const std::size_t K = p.size() + 1;
  OrdinalDecode d;
  d.raw.resize(K);
  d.raw[0] = 1.0 - p[0];
  for (std::size_t k = 1; k + 1 < K; ++k) d.raw[k] = p[k - 1] - p[k];
  d.raw[K - 1] = p[K - 2];
  d.predicted = argmax_lowest(d.raw);
  d.probs.resize(K);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    d.probs[k] = std::max(0.0, d.raw[k]);
    total += d.probs[k];
  }
  for (auto& v : d.probs) v /= total;
  return d;
}

template <class Real>
StgcnNetwork<Real> make_ordinal(const StgcnNetwork<Real>& base, std::uint64_t seed) {
  require(base.arch().head_mode == HeadMode::kClass, ErrorCode::kValidation,
          "ordinal heads attach to a K-class base network");
  ArchSpec arch = base.arch();
  arch.head_mode = HeadMode::kBinaryHeads;
  StgcnNetwork<Real> out(base.graph(), arch, seed);
  for (auto& b : out.blocks()) {
    if (b.name.rfind("head", 0) == 0) continue;
    b.value = base.block(b.name).value;
  }
  out.bn_stats() = base.bn_stats();
  out.freeze_backbone();
  return out;
}

template <class Real>
StgcnNetwork<Real> make_ordinal(const Container& base_checkpoint, const FaceGraphSpec& graph,
                                int classes, std::uint64_t seed) {
  const auto arch = ArchSpec::from_json(base_checkpoint.get("meta.arch").to_text());
  if (arch.classes != classes || arch.head_mode != HeadMode::kClass) {
    raise(ErrorCode::kFingerprint, "base checkpoint is not a " + std::to_string(classes) +
                                       "-class network: " + arch.to_json());
  }
  const auto base = network_from_container<Real>(base_checkpoint, graph, arch);
  return make_ordinal(base, seed);
}

template StgcnNetwork<float> make_ordinal(const StgcnNetwork<float>&, std::uint64_t);
template StgcnNetwork<double> make_ordinal(const StgcnNetwork<double>&, std::uint64_t);
template StgcnNetwork<float> make_ordinal<float>(const Container&, const FaceGraphSpec&, int, std::uint64_t);
template StgcnNetwork<double> make_ordinal<double>(const Container&, const FaceGraphSpec&, int, std::uint64_t);

}  // namespace engage

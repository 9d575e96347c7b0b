#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/face_graph.hpp"
#include "core/landmarks.hpp"
#include "core/ops.hpp"
#include "core/optim.hpp"

namespace engage {

struct LayerSpec {
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::size_t kernel = 9;
  bool residual = false;
  double dropout = 0.1;
  bool has_mask = true;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class HeadMode { kClass, kBinaryHeads };

const char* to_string(HeadMode mode) noexcept;
HeadMode parse_head_mode(const std::string& text);

struct ArchSpec {
  std::size_t nodes = kNodeCount;
  std::size_t in_channels = 3;
  int classes = 4;
  HeadMode head_mode = HeadMode::kClass;
  std::vector<LayerSpec> layers;

  /// Input BN, then channel widths as given; the first layer has no
  /// residual path and the rest do.
  static ArchSpec standard(int classes, HeadMode head_mode = HeadMode::kClass,
                           std::vector<std::size_t> channels = {64, 128, 256},
                           std::size_t kernel = 9, double dropout = 0.1,
                           std::size_t nodes = kNodeCount);

  std::size_t pooled_channels() const { return layers.back().c_out; }
  std::size_t head_outputs() const {
    return head_mode == HeadMode::kClass ? static_cast<std::size_t>(classes)
                                         : static_cast<std::size_t>(classes - 1);
  }
  void validate() const;
  std::string to_json() const;
  static ArchSpec from_json(const std::string& text);

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// Hash of the architecture together with the graph it runs on.
Fingerprint architecture_fingerprint(const ArchSpec& arch, const FaceGraphSpec& graph);

struct ParameterCount {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::vector<std::pair<std::string, std::size_t>> blocks;
};

/// Packs sequences (all the same length) into a (B, 3, T, N) batch.
template <class Real>
Tensor<Real> batch_from_sequences(std::span<const LandmarkSequence* const> seqs);

template <class Real>
Tensor<Real> batch_from_sequences(std::span<const LandmarkSequence> seqs) {
  std::vector<const LandmarkSequence*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  return batch_from_sequences<Real>(std::span<const LandmarkSequence* const>(ptrs));
}

/// Input BN over C·N features, then ST-GCN layers, global pooling and either
/// one K-way head or K-1 single-output heads. Each layer is:
///   s = relu(BN(node_mix(channel_mix(h), Λ^-½((A+I)⊙M)Λ^-½)))
///   u = BN(temporal_conv(s)) [+ residual(h)]
///   h' = dropout(relu(u))
template <class Real>
class StgcnNetwork {
 public:
  using Block = ad::ParameterBlock<Real>;

  struct Output {
    ad::Var<Real> logits;     // (B, K) or (B, K-1)
    ad::Var<Real> features;   // last layer output (B, C, T, N)
    ad::Var<Real> pooled;     // (B, C)
  };

  StgcnNetwork(FaceGraphSpec graph, ArchSpec arch, std::uint64_t seed);

  const ArchSpec& arch() const noexcept { return arch_; }
  const FaceGraphSpec& graph() const noexcept { return graph_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Fingerprint fingerprint() const { return architecture_fingerprint(arch_, graph_); }

  std::vector<Block>& blocks() noexcept { return blocks_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::vector<Block*> block_ptrs();
  Block& block(const std::string& name);
  const Block& block(const std::string& name) const;
  bool has_block(const std::string& name) const { return index_.count(name) != 0; }

  std::map<std::string, ad::BatchNormStats<Real>>& bn_stats() noexcept { return stats_; }
  const std::map<std::string, ad::BatchNormStats<Real>>& bn_stats() const noexcept { return stats_; }

  void zero_grad();
  /// Marks every block except the heads non-trainable.
  void freeze_backbone();

  Output forward(ad::Tape<Real>& tape, const Tensor<Real>& input, ad::Mode mode,
                 std::uint64_t dropout_seed = 0, bool input_requires_grad = false);
  /// Runs only the input BN and layers; exposed for layer-level checks.
  ad::Var<Real> input_norm(ad::Tape<Real>& tape, ad::Var<Real> x, ad::Mode mode);
  ad::Var<Real> layer_forward(ad::Tape<Real>& tape, std::size_t layer, ad::Var<Real> h,
                              ad::Mode mode, std::uint64_t dropout_seed);
  ad::Var<Real> head_forward(ad::Tape<Real>& tape, ad::Var<Real> pooled);

  /// Logits in eval mode without keeping the tape.
  Tensor<Real> predict_logits(const Tensor<Real>& input);

  ParameterCount count_parameters() const;

  /// Parameters and BN statistics as checkpoint records (names prefixed).
  void append_records(Container& c, const std::string& prefix = "") const;
  void load_records(const Container& c, const std::string& prefix = "");

 private:
  std::size_t add_block(std::string name, Tensor<Real> value);
  ad::Var<Real> bn(ad::Tape<Real>& tape, ad::Var<Real> x, const std::string& name,
                   ad::Mode mode, ad::BnAxis axis = ad::BnAxis::kChannel);

  FaceGraphSpec graph_;
  ArchSpec arch_;
  std::uint64_t seed_;
  ad::NodeSupport support_;
  std::vector<Block> blocks_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, ad::BatchNormStats<Real>> stats_;
};

std::string layer_prefix(std::size_t layer);
std::string binary_head_prefix(std::size_t head);

template <class Real>
void save_checkpoint(const StgcnNetwork<Real>& net, const std::filesystem::path& path,
                     const std::string& resolved_config = "{}");

template <class Real>
Container checkpoint_container(const StgcnNetwork<Real>& net,
                               const std::string& resolved_config = "{}");

/// Rebuilds the network stored in a container. When `expected` is given its
/// fingerprint must match the stored one.
template <class Real>
StgcnNetwork<Real> network_from_container(const Container& c, const FaceGraphSpec& graph,
                                          const std::optional<ArchSpec>& expected = std::nullopt);

template <class Real>
StgcnNetwork<Real> load_checkpoint(const std::filesystem::path& path, const FaceGraphSpec& graph,
                                   const std::optional<ArchSpec>& expected = std::nullopt);

extern template class StgcnNetwork<float>;
extern template class StgcnNetwork<double>;

}  // namespace engage

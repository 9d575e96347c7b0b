#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace engage::ad {

/// A named, optionally trainable array with its accumulated gradient.
template <class Real>
struct ParameterBlock {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  bool trainable = true;

  ParameterBlock() = default;
  ParameterBlock(std::string n, Tensor<Real> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad.fill(Real{0}); }
};

template <class Real>
class Tape;

/// Handle to a value recorded on a Tape.
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<Real>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  /// Gradient after Tape::backward; zeros if nothing flowed here.
  const Tensor<Real>& grad() const { return tape->grad(id); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

/// Wengert list. Nodes are appended in evaluation order, which is a
/// topological order, so the reverse sweep is a single backward pass.
template <class Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Real> constant(Tensor<Real> value) { return push(std::move(value), false, {}); }

  /// Leaf whose gradient is kept on the tape (inputs, Grad-CAM probes).
  Var<Real> input(Tensor<Real> value) { return push(std::move(value), true, {}); }

  /// Which parameter blocks receive gradients on this tape.
  enum class ParamGrads { kTrainable, kAll, kNone };

  /// Leaf backed by a parameter block without copying; backward adds the
  /// gradient into block.grad according to the ParamGrads policy.
  Var<Real> parameter(ParameterBlock<Real>& block) {
    Node node;
    node.external = &block.value;
    node.requires_grad = policy_ == ParamGrads::kAll ||
                         (policy_ == ParamGrads::kTrainable && block.trainable);
    node.sink = node.requires_grad ? &block.grad : nullptr;
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
  }

  void set_param_grads(ParamGrads policy) { policy_ = policy; }

  Var<Real> push(Tensor<Real> value, bool requires_grad, BackwardFn backward) {
    Node node;
    node.owned = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
  }

  const Tensor<Real>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Lazily allocated gradient accumulator for node `id`.
  Tensor<Real>& grad_mut(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.shape() != value(id).shape()) n.grad = Tensor<Real>(value(id).shape());
    return n.grad;
  }
  const Tensor<Real>& grad(std::size_t id) {
    return grad_mut(id);
  }

  /// Reverse sweep from a scalar root (seed 1).
  void backward(Var<Real> root) {
    require(root.value().size() == 1, ErrorCode::kShape, "backward root must be scalar");
    Tensor<Real> seed(root.shape(), Real{1});
    backward(root, seed);
  }

  void backward(Var<Real> root, const Tensor<Real>& seed) {
    require_shape(seed.shape(), root.shape(), "backward seed");
    if (!requires_grad(root.id)) return;
    auto& g = grad_mut(root.id);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    for (std::size_t id = root.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, id);
      if (n.sink) {
        auto& sink = *n.sink;
        for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += n.grad[i];
      }
    }
  }

  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Sign pattern of every ReLU input seen so far; gradient checks compare
  /// it across perturbations to skip non-differentiable points.
  std::vector<std::uint8_t>& kink_signature() { return kinks_; }
  void set_record_kinks(bool on) { record_kinks_ = on; }
  bool records_kinks() const noexcept { return record_kinks_; }

 private:
  struct Node {
    Tensor<Real> owned;
    const Tensor<Real>* external = nullptr;
    Tensor<Real> grad;
    Tensor<Real>* sink = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::vector<std::uint8_t> kinks_;
  bool record_kinks_ = false;
  ParamGrads policy_ = ParamGrads::kTrainable;
};

}  // namespace engage::ad

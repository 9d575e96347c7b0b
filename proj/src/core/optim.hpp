#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "core/autodiff.hpp"

namespace engage::ad {

template <class Real>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<Real>> m;
  std::vector<Tensor<Real>> v;
};

/// Bias-corrected Adam over `params`; frozen blocks are skipped entirely
/// (their moments stay untouched as well).
template <class Real>
void adam_step(std::vector<ParameterBlock<Real>*> params, AdamState<Real>& state, double lr) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& p = *params[b];
    if (!p.trainable) continue;
    auto& m = state.m[b];
    auto& v = state.v[b];
    require_shape(m.shape(), p.value.shape(), "adam moment for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + state.eps);
      p.value[i] = static_cast<Real>(p.value[i] - update);
    }
  }
}

}  // namespace engage::ad

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "core/autodiff.hpp"
#include "core/random.hpp"

namespace engage::ad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Relative error used throughout: |a - f| / max(|a|, |f|, 1e-6). The floor
/// sits above the central-difference roundoff of an O(1) loss (about 1e-11
/// at h = 1e-5), so gradients that are structurally zero, such as a bias
/// feeding train-mode batch norm, compare as zero instead of as noise.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Builds the scalar loss on the given tape. Must read the parameter blocks
/// through Tape::parameter so both analytic and perturbed passes see them.
using LossBuilder = std::function<Var<double>(Tape<double>&)>;

/// Central differences (step h) on up to `samples_per_block` coordinates of
/// each block. Coordinates whose perturbation flips the sign pattern of any
/// ReLU input are skipped.
inline GradCheckReport grad_check(const LossBuilder& build,
                                  std::vector<ParameterBlock<double>*> blocks,
                                  std::size_t samples_per_block, std::uint64_t seed,
                                  double h = 1e-5) {
  for (auto* b : blocks) b->zero_grad();
  std::vector<std::uint8_t> base_kinks;
  {
    Tape<double> tape;
    tape.set_param_grads(Tape<double>::ParamGrads::kAll);
    tape.set_record_kinks(true);
    auto loss = build(tape);
    tape.backward(loss);
    base_kinks = tape.kink_signature();
  }
  auto eval = [&](std::vector<std::uint8_t>& kinks) {
    Tape<double> tape;
    tape.set_param_grads(Tape<double>::ParamGrads::kNone);
    tape.set_record_kinks(true);
    const double v = build(tape).value()[0];
    kinks = tape.kink_signature();
    return v;
  };

  GradCheckReport report;
  Rng rng(seed);
  for (auto* block : blocks) {
    const std::size_t n = block->value.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() > samples_per_block) idx.resize(samples_per_block);
    for (auto i : idx) {
      const double orig = block->value[i];
      std::vector<std::uint8_t> kp, km;
      block->value[i] = orig + h;
      const double fp = eval(kp);
      block->value[i] = orig - h;
      const double fm = eval(km);
      block->value[i] = orig;
      if (kp != base_kinks || km != base_kinks) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = relative_error(block->grad[i], numeric);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_block = block->name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace engage::ad

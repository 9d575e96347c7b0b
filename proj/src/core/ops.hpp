#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "core/autodiff.hpp"
#include "core/face_graph.hpp"
#include "core/parallel.hpp"
#include "core/random.hpp"

// Differentiable primitives over (B, C, T, N) feature maps.

namespace engage::ad {

enum class Mode { kTrain, kEval };

namespace detail {

inline void check_rank(const Shape& s, std::size_t rank, const char* what) {
  require(s.size() == rank, ErrorCode::kShape,
          std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
              shape_string(s));
}

}  // namespace detail

template <class Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <class Real>
using ConstMatMap = Eigen::Map<const RowMat<Real>>;

/// 1x1 channel mixing: y[b,o] = Σ_i W[o,i] x[b,i] + bias[o] over each T x N plane.
template <class Real>
Var<Real> channel_mix(Var<Real> x, Var<Real> weight, Var<Real> bias) {
  auto& tape = *x.tape;
  const auto& xs = x.shape();
  detail::check_rank(xs, 4, "channel_mix input");
  const std::size_t B = xs[0], Ci = xs[1], P = xs[2] * xs[3];
  const std::size_t Co = weight.shape().at(0);
  require_shape(weight.shape(), {Co, Ci}, "channel_mix weight");
  require_shape(bias.shape(), {Co}, "channel_mix bias");
  const auto co = static_cast<Eigen::Index>(Co), ci = static_cast<Eigen::Index>(Ci),
             pp = static_cast<Eigen::Index>(P);

  Tensor<Real> out({B, Co, xs[2], xs[3]});
  {
    ConstMatMap<Real> W(weight.value().data(), co, ci);
    const Real* bv = bias.value().data();
    ENGAGE_PARALLEL_FOR
    for (std::size_t b = 0; b < B; ++b) {
      MatMap<Real> Y(out.data() + b * Co * P, co, pp);
      for (Eigen::Index o = 0; o < co; ++o) Y.row(o).setConstant(bv[o]);
      Y.noalias() += W * ConstMatMap<Real>(x.value().data() + b * Ci * P, ci, pp);
    }
  }
  const bool rg = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return tape.push(std::move(out), rg, [=](Tape<Real>& t, std::size_t self) {
    const Real* G = t.grad(self).data();
    const Real* X = t.value(x.id).data();
    ConstMatMap<Real> W(t.value(weight.id).data(), co, ci);
    if (t.requires_grad(x.id)) {
      Real* DX = t.grad_mut(x.id).data();
      ENGAGE_PARALLEL_FOR
      for (std::size_t b = 0; b < B; ++b) {
        MatMap<Real>(DX + b * Ci * P, ci, pp).noalias() +=
            W.transpose() * ConstMatMap<Real>(G + b * Co * P, co, pp);
      }
    }
    if (t.requires_grad(weight.id)) {
      MatMap<Real> DW(t.grad_mut(weight.id).data(), co, ci);
      for (std::size_t b = 0; b < B; ++b) {
        DW.noalias() += ConstMatMap<Real>(G + b * Co * P, co, pp) *
                        ConstMatMap<Real>(X + b * Ci * P, ci, pp).transpose();
      }
    }
    if (t.requires_grad(bias.id)) {
      Real* DB = t.grad_mut(bias.id).data();
      for (std::size_t o = 0; o < Co; ++o) {
        Real acc = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const Real* g = G + (b * Co + o) * P;
          ENGAGE_SIMD_SUM(acc)
          for (std::size_t p = 0; p < P; ++p) acc += g[p];
        }
        DB[o] += acc;
      }
    }
  });
}

/// Sparsity pattern for node mixing: the (i, j) entries of the mixing matrix
/// that may be nonzero. Gradients with respect to the matrix are produced on
/// this pattern only (zeros elsewhere).
using NodeSupport = std::vector<std::pair<std::size_t, std::size_t>>;

inline NodeSupport dense_support(std::size_t n) {
  NodeSupport s;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s.emplace_back(i, j);
  return s;
}

/// Node mixing along the last axis: y[..., j] = Σ_i A[j, i] · x[..., i],
/// i.e. A applied to every node vector.
template <class Real>
Var<Real> node_mix(Var<Real> x, Var<Real> adj, const NodeSupport& support) {
  auto& tape = *x.tape;
  const auto& xs = x.shape();
  detail::check_rank(xs, 4, "node_mix input");
  const std::size_t N = xs[3];
  require_shape(adj.shape(), {N, N}, "node_mix adjacency");
  const std::size_t R = xs[0] * xs[1] * xs[2];
  const std::size_t B = xs[0], RB = xs[1] * xs[2];

  std::vector<std::uint32_t> si(support.size()), sj(support.size());
  for (std::size_t e = 0; e < support.size(); ++e) {
    si[e] = static_cast<std::uint32_t>(support[e].first);
    sj[e] = static_cast<std::uint32_t>(support[e].second);
    require(support[e].first < N && support[e].second < N, ErrorCode::kOutOfRange,
            "node_mix support index out of range");
  }

  // Dense GEMMs against the matrix restricted to its support; at face-graph
  // sizes this beats an indexed sparse loop.
  const auto nn = static_cast<Eigen::Index>(N), rb = static_cast<Eigen::Index>(RB);
  auto restricted = [=](const Real* A) {
    RowMat<Real> m = RowMat<Real>::Zero(nn, nn);
    for (std::size_t e = 0; e < si.size(); ++e) m(si[e], sj[e]) = A[si[e] * N + sj[e]];
    return m;
  };

  Tensor<Real> out(xs);
  {
    const RowMat<Real> As = restricted(adj.value().data());
    ENGAGE_PARALLEL_FOR
    for (std::size_t b = 0; b < B; ++b) {
      MatMap<Real>(out.data() + b * RB * N, rb, nn).noalias() =
          ConstMatMap<Real>(x.value().data() + b * RB * N, rb, nn) * As.transpose();
    }
  }
  (void)R;
  const bool rg = x.requires_grad() || adj.requires_grad();
  return tape.push(std::move(out), rg,
                   [=, si = std::move(si), sj = std::move(sj)](Tape<Real>& t, std::size_t self) {
    const Real* G = t.grad(self).data();
    const Real* X = t.value(x.id).data();
    if (t.requires_grad(x.id)) {
      RowMat<Real> As = RowMat<Real>::Zero(nn, nn);
      const Real* A = t.value(adj.id).data();
      for (std::size_t e = 0; e < si.size(); ++e) As(si[e], sj[e]) = A[si[e] * N + sj[e]];
      Real* DX = t.grad_mut(x.id).data();
      ENGAGE_PARALLEL_FOR
      for (std::size_t b = 0; b < B; ++b) {
        MatMap<Real>(DX + b * RB * N, rb, nn).noalias() +=
            ConstMatMap<Real>(G + b * RB * N, rb, nn) * As;
      }
    }
    if (t.requires_grad(adj.id)) {
      RowMat<Real> full = RowMat<Real>::Zero(nn, nn);
      for (std::size_t b = 0; b < B; ++b) {
        full.noalias() += ConstMatMap<Real>(G + b * RB * N, rb, nn).transpose() *
                          ConstMatMap<Real>(X + b * RB * N, rb, nn);
      }
      Real* DA = t.grad_mut(adj.id).data();
      for (std::size_t e = 0; e < si.size(); ++e) DA[si[e] * N + sj[e]] += full(si[e], sj[e]);
    }
  });
}

/// Λ^(-1/2) ((A + I) ⊙ M) Λ^(-1/2) with Λ taken from A + I.
template <class Real>
Var<Real> masked_adjacency(Var<Real> mask, const FaceGraphSpec& graph) {
  auto& tape = *mask.tape;
  const std::size_t N = graph.node_count;
  require_shape(mask.shape(), {N, N}, "adjacency mask");
  const auto deg = graph.degrees();
  Tensor<Real> scale({N, N});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j)
      if (i == j || graph.connected(i, j))
        scale[i * N + j] = static_cast<Real>(1.0 / std::sqrt(deg[i] * deg[j]));
  Tensor<Real> out({N, N});
  const auto& M = mask.value();
  for (std::size_t k = 0; k < N * N; ++k) out[k] = scale[k] * M[k];
  return tape.push(std::move(out), mask.requires_grad(),
                   [=, scale = std::move(scale)](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    auto& DM = t.grad_mut(mask.id);
    for (std::size_t k = 0; k < N * N; ++k) DM[k] += scale[k] * G[k];
  });
}

/// Convolution along frames with kernel length Γ (odd) and symmetric zero
/// padding: y[b,o,t,n] = Σ_i Σ_k W[o,i,k] x[b,i,t+k-(Γ-1)/2,n] + bias[o].
template <class Real>
Var<Real> temporal_conv(Var<Real> x, Var<Real> weight, Var<Real> bias) {
  auto& tape = *x.tape;
  const auto& xs = x.shape();
  detail::check_rank(xs, 4, "temporal_conv input");
  const std::size_t B = xs[0], Ci = xs[1], T = xs[2], N = xs[3];
  detail::check_rank(weight.shape(), 3, "temporal_conv weight");
  const std::size_t Co = weight.shape()[0], K = weight.shape()[2];
  require_shape(weight.shape(), {Co, Ci, K}, "temporal_conv weight");
  require_shape(bias.shape(), {Co}, "temporal_conv bias");
  require(K % 2 == 1, ErrorCode::kValidation, "temporal kernel length must be odd");
  require(K <= 2 * T - 1, ErrorCode::kValidation, "temporal kernel longer than 2T-1");
  const std::size_t P = T * N;
  const auto pad = static_cast<std::ptrdiff_t>((K - 1) / 2);
  const auto PN = static_cast<std::ptrdiff_t>(P);

  // Each tap k is a GEMM between W[:, :, k] and the input plane shifted by
  // (k - pad) frames; columns j with j + shift outside the plane see zeros.
  auto span_for = [=](std::size_t k) {
    const std::ptrdiff_t s = (static_cast<std::ptrdiff_t>(k) - pad) * static_cast<std::ptrdiff_t>(N);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -s);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(PN, PN - s);
    return std::tuple{s, lo, hi};
  };
  const auto co = static_cast<Eigen::Index>(Co), ci = static_cast<Eigen::Index>(Ci),
             pp = static_cast<Eigen::Index>(P);
  // Taps repacked as K contiguous (Co, Ci) matrices.
  auto split_taps = [=](const Real* W) {
    std::vector<RowMat<Real>> taps(K, RowMat<Real>(co, ci));
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t i = 0; i < Ci; ++i)
        for (std::size_t k = 0; k < K; ++k)
          taps[k](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) = W[(o * Ci + i) * K + k];
    return taps;
  };

  Tensor<Real> out({B, Co, T, N});
  {
    const auto taps = split_taps(weight.value().data());
    const Real* bv = bias.value().data();
    ENGAGE_PARALLEL_FOR
    for (std::size_t b = 0; b < B; ++b) {
      MatMap<Real> Y(out.data() + b * Co * P, co, pp);
      ConstMatMap<Real> X(x.value().data() + b * Ci * P, ci, pp);
      for (Eigen::Index o = 0; o < co; ++o) Y.row(o).setConstant(bv[o]);
      for (std::size_t k = 0; k < K; ++k) {
        const auto [s, lo, hi] = span_for(k);
        if (hi <= lo) continue;
        Y.middleCols(lo, hi - lo).noalias() += taps[k] * X.middleCols(lo + s, hi - lo);
      }
    }
  }
  const bool rg = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return tape.push(std::move(out), rg, [=](Tape<Real>& t, std::size_t self) {
    const Real* G = t.grad(self).data();
    const Real* Xd = t.value(x.id).data();
    if (t.requires_grad(x.id)) {
      const auto taps = split_taps(t.value(weight.id).data());
      Real* DX = t.grad_mut(x.id).data();
      ENGAGE_PARALLEL_FOR
      for (std::size_t b = 0; b < B; ++b) {
        MatMap<Real> dX(DX + b * Ci * P, ci, pp);
        ConstMatMap<Real> Gb(G + b * Co * P, co, pp);
        for (std::size_t k = 0; k < K; ++k) {
          const auto [s, lo, hi] = span_for(k);
          if (hi <= lo) continue;
          dX.middleCols(lo + s, hi - lo).noalias() += taps[k].transpose() * Gb.middleCols(lo, hi - lo);
        }
      }
    }
    if (t.requires_grad(weight.id)) {
      std::vector<RowMat<Real>> dtaps(K, RowMat<Real>::Zero(co, ci));
      ENGAGE_PARALLEL_FOR
      for (std::size_t k = 0; k < K; ++k) {
        const auto [s, lo, hi] = span_for(k);
        if (hi <= lo) continue;
        for (std::size_t b = 0; b < B; ++b) {
          ConstMatMap<Real> Gb(G + b * Co * P, co, pp);
          ConstMatMap<Real> Xb(Xd + b * Ci * P, ci, pp);
          dtaps[k].noalias() += Gb.middleCols(lo, hi - lo) * Xb.middleCols(lo + s, hi - lo).transpose();
        }
      }
      Real* DW = t.grad_mut(weight.id).data();
      for (std::size_t o = 0; o < Co; ++o)
        for (std::size_t i = 0; i < Ci; ++i)
          for (std::size_t k = 0; k < K; ++k)
            DW[(o * Ci + i) * K + k] += dtaps[k](static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i));
    }
    if (t.requires_grad(bias.id)) {
      Real* DB = t.grad_mut(bias.id).data();
      for (std::size_t o = 0; o < Co; ++o) {
        Real acc = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const Real* g = G + (b * Co + o) * P;
          ENGAGE_SIMD_SUM(acc)
          for (std::size_t j = 0; j < P; ++j) acc += g[j];
        }
        DB[o] += acc;
      }
    }
  });
}

/// Running statistics of a batch-norm layer.
template <class Real>
struct BatchNormStats {
  Tensor<Real> mean;
  Tensor<Real> var;

  explicit BatchNormStats(std::size_t features = 0)
      : mean({features}, Real{0}), var({features}, Real{1}) {}
};

/// kChannel normalizes each channel over (B, T, N); kChannelNode treats every
/// (channel, node) pair as its own feature and normalizes over (B, T).
enum class BnAxis { kChannel, kChannelNode };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <class Real>
Var<Real> batch_norm(Var<Real> x, Var<Real> gamma, Var<Real> beta,
                     BatchNormStats<Real>& stats, Mode mode, BnAxis axis = BnAxis::kChannel) {
  auto& tape = *x.tape;
  const auto& xs = x.shape();
  detail::check_rank(xs, 4, "batch_norm input");
  const std::size_t B = xs[0], C = xs[1], T = xs[2], N = xs[3];
  const std::size_t F = axis == BnAxis::kChannel ? C : C * N;
  require_shape(gamma.shape(), {F}, "batch_norm gamma");
  require_shape(beta.shape(), {F}, "batch_norm beta");
  require_shape(stats.mean.shape(), {F}, "batch_norm running mean");
  const std::size_t count = axis == BnAxis::kChannel ? B * T * N : B * T;

  // Visits every element of feature f as (flat index).
  auto for_feature = [=](std::size_t f, auto&& fn) {
    if (axis == BnAxis::kChannel) {
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t base = (b * C + f) * T * N;
        for (std::size_t k = 0; k < T * N; ++k) fn(base + k);
      }
    } else {
      const std::size_t c = f / N, n = f % N;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t) fn(((b * C + c) * T + t) * N + n);
    }
  };

  const Real* X = x.value().data();
  const Real* Gm = gamma.value().data();
  const Real* Bt = beta.value().data();
  Tensor<Real> out(xs);
  Real* Y = out.data();
  std::vector<Real> inv_std(F), mean(F);
  const bool train = mode == Mode::kTrain;
  ENGAGE_PARALLEL_FOR
  for (std::size_t f = 0; f < F; ++f) {
    double mu, var;
    if (train) {
      double s = 0.0;
      for_feature(f, [&](std::size_t k) { s += X[k]; });
      mu = s / static_cast<double>(count);
      double ss = 0.0;
      for_feature(f, [&](std::size_t k) {
        const double d = X[k] - mu;
        ss += d * d;
      });
      var = ss / static_cast<double>(count);
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
      stats.mean[f] = static_cast<Real>((1.0 - kBatchNormMomentum) * stats.mean[f] +
                                        kBatchNormMomentum * mu);
      stats.var[f] = static_cast<Real>((1.0 - kBatchNormMomentum) * stats.var[f] +
                                       kBatchNormMomentum * unbiased);
    } else {
      mu = stats.mean[f];
      var = stats.var[f];
    }
    const double is = 1.0 / std::sqrt(var + kBatchNormEps);
    mean[f] = static_cast<Real>(mu);
    inv_std[f] = static_cast<Real>(is);
    const Real g = Gm[f], bt = Bt[f];
    const Real m = mean[f], r = inv_std[f];
    for_feature(f, [&](std::size_t k) { Y[k] = g * (X[k] - m) * r + bt; });
  }

  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return tape.push(std::move(out), rg,
                   [=, mean = std::move(mean), inv_std = std::move(inv_std)](
                       Tape<Real>& t, std::size_t self) {
    const Real* Gd = t.grad(self).data();
    const Real* X = t.value(x.id).data();
    const Real* Gm = t.value(gamma.id).data();
    Real* DX = t.requires_grad(x.id) ? t.grad_mut(x.id).data() : nullptr;
    Real* DG = t.requires_grad(gamma.id) ? t.grad_mut(gamma.id).data() : nullptr;
    Real* DB = t.requires_grad(beta.id) ? t.grad_mut(beta.id).data() : nullptr;
    ENGAGE_PARALLEL_FOR
    for (std::size_t f = 0; f < F; ++f) {
      const double m = mean[f], r = inv_std[f];
      double sum_g = 0.0, sum_gx = 0.0;
      for_feature(f, [&](std::size_t k) {
        sum_g += Gd[k];
        sum_gx += Gd[k] * (X[k] - m) * r;
      });
      if (DG) DG[f] += static_cast<Real>(sum_gx);
      if (DB) DB[f] += static_cast<Real>(sum_g);
      if (!DX) continue;
      const double g = Gm[f];
      if (train) {
        const double mg = sum_g / static_cast<double>(count);
        const double mgx = sum_gx / static_cast<double>(count);
        for_feature(f, [&](std::size_t k) {
          const double xh = (X[k] - m) * r;
          DX[k] += static_cast<Real>(g * r * (Gd[k] - mg - xh * mgx));
        });
      } else {
        for_feature(f, [&](std::size_t k) { DX[k] += static_cast<Real>(g * r * Gd[k]); });
      }
    }
  });
}

template <class Real>
Var<Real> relu(Var<Real> x) {
  auto& tape = *x.tape;
  Tensor<Real> out(x.shape());
  const auto& xv = x.value();
  const std::size_t n = xv.size();
  ENGAGE_SIMD
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] > Real{0} ? xv[i] : Real{0};
  if (tape.records_kinks()) {
    auto& kinks = tape.kink_signature();
    const std::size_t base = kinks.size();
    kinks.resize(base + n);
    for (std::size_t i = 0; i < n; ++i)
      kinks[base + i] = xv[i] > Real{0} ? 1 : (xv[i] == Real{0} ? 2 : 0);
  }
  return tape.push(std::move(out), x.requires_grad(), [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(x.id);
    auto& dx = t.grad_mut(x.id);
    const std::size_t n = g.size();
    ENGAGE_SIMD
    for (std::size_t i = 0; i < n; ++i) dx[i] += xv[i] > Real{0} ? g[i] : Real{0};
  });
}

/// Inverted dropout; identity in eval mode or at rate 0.
template <class Real>
Var<Real> dropout(Var<Real> x, double rate, Mode mode, std::uint64_t seed) {
  require(rate >= 0.0 && rate < 1.0, ErrorCode::kValidation, "dropout rate must be in [0, 1)");
  if (mode == Mode::kEval || rate == 0.0) return x;
  auto& tape = *x.tape;
  const auto& xv = x.value();
  // Element i is kept iff a counter hash of (seed, i) lands above `rate`.
  const std::size_t n = xv.size();
  std::vector<std::uint8_t> keep(n);
  const auto threshold = static_cast<std::uint64_t>(rate * 0x1.0p53);
  ENGAGE_PARALLEL_FOR
  for (std::size_t i = 0; i < n; ++i)
    keep[i] = (splitmix64(seed + 0x9e3779b97f4a7c15ULL * (i + 1)) >> 11) >= threshold;
  const auto keep_scale = static_cast<Real>(1.0 / (1.0 - rate));
  Tensor<Real> out(x.shape());
  ENGAGE_SIMD
  for (std::size_t i = 0; i < n; ++i) out[i] = keep[i] ? xv[i] * keep_scale : Real{0};
  return tape.push(std::move(out), x.requires_grad(),
                   [=, keep = std::move(keep)](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& dx = t.grad_mut(x.id);
    const std::size_t n = g.size();
    ENGAGE_SIMD
    for (std::size_t i = 0; i < n; ++i) dx[i] += keep[i] ? g[i] * keep_scale : Real{0};
  });
}

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  auto& tape = *a.tape;
  require_shape(b.shape(), a.shape(), "add operand");
  Tensor<Real> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const bool rg = a.requires_grad() || b.requires_grad();
  return tape.push(std::move(out), rg, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (auto id : {a.id, b.id}) {
      if (!t.requires_grad(id)) continue;
      auto& d = t.grad_mut(id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

/// Mean over (T, N): (B, C, T, N) -> (B, C).
template <class Real>
Var<Real> global_avg_pool(Var<Real> x) {
  auto& tape = *x.tape;
  const auto& xs = x.shape();
  detail::check_rank(xs, 4, "global_avg_pool input");
  const std::size_t BC = xs[0] * xs[1], P = xs[2] * xs[3];
  Tensor<Real> out({xs[0], xs[1]});
  const Real* X = x.value().data();
  for (std::size_t r = 0; r < BC; ++r) {
    double s = 0.0;
    for (std::size_t p = 0; p < P; ++p) s += X[r * P + p];
    out[r] = static_cast<Real>(s / static_cast<double>(P));
  }
  return tape.push(std::move(out), x.requires_grad(), [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    Real* dx = t.grad_mut(x.id).data();
    const Real inv = static_cast<Real>(1.0 / static_cast<double>(P));
    for (std::size_t r = 0; r < BC; ++r) {
      const Real v = g[r] * inv;
      for (std::size_t p = 0; p < P; ++p) dx[r * P + p] += v;
    }
  });
}

/// (B, C) · Wᵀ + bias with W of shape (K, C).
template <class Real>
Var<Real> linear(Var<Real> x, Var<Real> weight, Var<Real> bias) {
  auto& tape = *x.tape;
  detail::check_rank(x.shape(), 2, "linear input");
  const std::size_t B = x.shape()[0], C = x.shape()[1];
  const std::size_t K = weight.shape().at(0);
  require_shape(weight.shape(), {K, C}, "linear weight");
  require_shape(bias.shape(), {K}, "linear bias");
  Tensor<Real> out({B, K});
  const auto& X = x.value();
  const auto& W = weight.value();
  const auto& bv = bias.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) {
      Real acc = bv[k];
      for (std::size_t c = 0; c < C; ++c) acc += W[k * C + c] * X[b * C + c];
      out[b * K + k] = acc;
    }
  const bool rg = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return tape.push(std::move(out), rg, [=](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& X = t.value(x.id);
    const auto& W = t.value(weight.id);
    if (t.requires_grad(x.id)) {
      auto& dx = t.grad_mut(x.id);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t c = 0; c < C; ++c) dx[b * C + c] += G[b * K + k] * W[k * C + c];
    }
    if (t.requires_grad(weight.id)) {
      auto& dw = t.grad_mut(weight.id);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t c = 0; c < C; ++c) dw[k * C + c] += G[b * K + k] * X[b * C + c];
    }
    if (t.requires_grad(bias.id)) {
      auto& db = t.grad_mut(bias.id);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) db[k] += G[b * K + k];
    }
  });
}

/// Σ w_i x_i, a scalar probe used by gradient checks.
template <class Real>
Var<Real> weighted_sum(Var<Real> x, const Tensor<Real>& weights) {
  auto& tape = *x.tape;
  require_shape(weights.shape(), x.shape(), "weighted_sum weights");
  const auto& xv = x.value();
  Real acc = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += weights[i] * xv[i];
  return tape.push(Tensor<Real>({1}, acc), x.requires_grad(),
                   [=](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    auto& dx = t.grad_mut(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * weights[i];
  });
}

/// Concatenates (B, k_i) blocks along the second axis.
template <class Real>
Var<Real> concat_columns(const std::vector<Var<Real>>& parts) {
  require(!parts.empty(), ErrorCode::kShape, "concat_columns needs at least one part");
  auto& tape = *parts.front().tape;
  const std::size_t B = parts.front().shape().at(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::check_rank(p.shape(), 2, "concat_columns part");
    require(p.shape()[0] == B, ErrorCode::kShape, "concat_columns batch mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
    rg = rg || p.requires_grad();
  }
  Tensor<Real> out({B, total});
  std::size_t off = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto& v = parts[q].value();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < widths[q]; ++k) out[b * total + off + k] = v[b * widths[q] + k];
    off += widths[q];
  }
  return tape.push(std::move(out), rg, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t q = 0; q < parts.size(); ++q) {
      if (t.requires_grad(parts[q].id)) {
        auto& d = t.grad_mut(parts[q].id);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t k = 0; k < widths[q]; ++k) d[b * widths[q] + k] += g[b * total + off + k];
      }
      off += widths[q];
    }
  });
}

template <class Real>
struct LossResult {
  Var<Real> loss;           // scalar, mean over the batch
  Tensor<Real> probs;       // softmax rows or per-logit sigmoid
};

/// Row-wise softmax with the max subtracted.
template <class Real>
Tensor<Real> softmax_rows(const Tensor<Real>& logits) {
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  Tensor<Real> p({B, K});
  for (std::size_t b = 0; b < B; ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(logits[b * K + k]));
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[b * K + k] - mx);
    for (std::size_t k = 0; k < K; ++k)
      p[b * K + k] = static_cast<Real>(std::exp(logits[b * K + k] - mx) / z);
  }
  return p;
}

/// Mean cross-entropy over the batch; with `weights` the mean is
/// Σ_b w_b·ℓ_b / Σ_b w_b.
template <class Real>
LossResult<Real> softmax_xent(Var<Real> logits, std::span<const int> labels,
                              std::span<const double> weights = {}) {
  auto& tape = *logits.tape;
  detail::check_rank(logits.shape(), 2, "softmax_xent logits");
  const std::size_t B = logits.shape()[0], K = logits.shape()[1];
  require(labels.size() == B, ErrorCode::kShape, "softmax_xent: label count != batch size");
  require(weights.empty() || weights.size() == B, ErrorCode::kShape,
          "softmax_xent: weight count != batch size");
  const auto& L = logits.value();
  auto probs = softmax_rows(L);
  std::vector<int> y(labels.begin(), labels.end());
  std::vector<double> w(B, 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  double total = 0.0, wsum = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    require(y[b] >= 0 && static_cast<std::size_t>(y[b]) < K, ErrorCode::kOutOfRange,
            "softmax_xent: label out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(L[b * K + k]));
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(L[b * K + k] - mx);
    total += w[b] * (mx + std::log(z) - L[b * K + static_cast<std::size_t>(y[b])]);
    wsum += w[b];
  }
  require(wsum > 0.0, ErrorCode::kValidation, "softmax_xent: weights sum to zero");
  auto loss = tape.push(Tensor<Real>({1}, static_cast<Real>(total / wsum)),
                        logits.requires_grad(),
                        [=](Tape<Real>& t, std::size_t self) {
    const double g = t.grad(self)[0] / wsum;
    auto& dl = t.grad_mut(logits.id);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < K; ++k) {
        const Real onehot = static_cast<std::size_t>(y[b]) == k ? Real{1} : Real{0};
        dl[b * K + k] += static_cast<Real>(g * w[b]) * (probs[b * K + k] - onehot);
      }
  });
  return {loss, probs};
}

template <class Real>
Real sigmoid(Real z) {
  if (z >= Real{0}) return Real{1} / (Real{1} + std::exp(-z));
  const Real e = std::exp(z);
  return e / (Real{1} + e);
}

/// Binary cross-entropy on logits (B, H) against targets in [0, 1]; the loss
/// is Σ_h mean_b so each head receives its own unscaled mean gradient.
template <class Real>
LossResult<Real> sigmoid_bce(Var<Real> logits, const Tensor<Real>& targets) {
  auto& tape = *logits.tape;
  detail::check_rank(logits.shape(), 2, "sigmoid_bce logits");
  require_shape(targets.shape(), logits.shape(), "sigmoid_bce targets");
  const std::size_t B = logits.shape()[0];
  const auto& Z = logits.value();
  Tensor<Real> probs(Z.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < Z.size(); ++i) {
    const double z = Z[i], y = targets[i];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    probs[i] = sigmoid(Z[i]);
  }
  auto loss = tape.push(Tensor<Real>({1}, static_cast<Real>(total / static_cast<double>(B))),
                        logits.requires_grad(),
                        [=](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0] / static_cast<Real>(B);
    auto& dl = t.grad_mut(logits.id);
    for (std::size_t i = 0; i < dl.size(); ++i) dl[i] += g * (probs[i] - targets[i]);
  });
  return {loss, probs};
}

}  // namespace engage::ad

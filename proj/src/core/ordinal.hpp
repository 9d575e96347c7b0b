#pragma once

#include <span>
#include <vector>

#include "core/stgcn.hpp"

namespace engage {

/// labels[i][s] = 1 iff the ordinal label of sample s exceeds i.
struct BinaryLabelSet {
  int classes = 0;
  std::vector<std::vector<int>> labels;
};

BinaryLabelSet binarize_labels(std::span<const int> labels, int classes);

struct OrdinalDecode {
  std::vector<double> raw;    // telescoping differences, sum to 1
  std::vector<double> probs;  // negatives clamped to 0, renormalized
  int predicted = 0;
};

/// p(0) = 1 - p(y>0); p(k) = p(y>k-1) - p(y>k); p(K-1) = p(y>K-2).
/// The class is the argmax of the raw values with ties going to the lower
/// index.
OrdinalDecode decode_ordinal(std::span<const double> greater_than_probs);

/// Index of the largest value, lowest index among values within `tie_tol`.
int argmax_lowest(std::span<const double> values, double tie_tol = 1e-12);

/// Copies the backbone of a trained K-class network, freezes it and attaches
/// K-1 freshly initialized single-output heads.
template <class Real>
StgcnNetwork<Real> make_ordinal(const StgcnNetwork<Real>& base, std::uint64_t seed);

/// Same, starting from a checkpoint that must hold a `classes`-way network.
template <class Real>
StgcnNetwork<Real> make_ordinal(const Container& base_checkpoint, const FaceGraphSpec& graph,
                                int classes, std::uint64_t seed);

}  // namespace engage

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace engage {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(int truth, int predicted) const {
    return counts[static_cast<std::size_t>(truth * classes + predicted)];
  }
  std::uint64_t total() const;
  std::uint64_t trace() const;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int classes);
double accuracy(std::span<const int> truth, std::span<const int> predicted);
double accuracy(const ConfusionMatrix& cm);
double mean_absolute_error(std::span<const int> truth, std::span<const int> predicted);

/// Rank statistic: P(score_pos > score_neg) + ½ P(equal). Throws
/// kUndefinedMetric unless both classes are present.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: Σ (R_k - R_{k-1}) P_k over distinct score thresholds
/// taken from high to low.
double auc_pr(std::span<const double> scores, std::span<const int> labels);

}  // namespace engage

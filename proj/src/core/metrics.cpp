#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"

namespace engage {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (int k = 0; k < classes; ++k) s += at(k, k);
  return s;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int classes) {
  require(truth.size() == predicted.size(), ErrorCode::kShape,
          "truth and prediction lengths differ");
  require(classes >= 1, ErrorCode::kValidation, "class count must be positive");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(static_cast<std::size_t>(classes * classes), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && truth[i] < classes && predicted[i] >= 0 && predicted[i] < classes,
            ErrorCode::kOutOfRange, "label out of range at index " + std::to_string(i));
    ++cm.counts[static_cast<std::size_t>(truth[i] * classes + predicted[i])];
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const auto n = cm.total();
  require(n > 0, ErrorCode::kUndefinedMetric, "accuracy of an empty set");
  return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

double accuracy(std::span<const int> truth, std::span<const int> predicted) {
  require(truth.size() == predicted.size(), ErrorCode::kShape,
          "truth and prediction lengths differ");
  require(!truth.empty(), ErrorCode::kUndefinedMetric, "accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == predicted[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double mean_absolute_error(std::span<const int> truth, std::span<const int> predicted) {
  require(truth.size() == predicted.size(), ErrorCode::kShape,
          "truth and prediction lengths differ");
  require(!truth.empty(), ErrorCode::kUndefinedMetric, "MAE of an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(truth[i] - predicted[i]);
  return s / static_cast<double>(truth.size());
}

namespace {

void check_binary(std::span<const double> scores, std::span<const int> labels,
                  std::size_t& positives, std::size_t& negatives) {
  require(scores.size() == labels.size(), ErrorCode::kShape, "score and label lengths differ");
  positives = negatives = 0;
  for (auto y : labels) {
    require(y == 0 || y == 1, ErrorCode::kValidation, "binary labels must be 0 or 1");
    (y ? positives : negatives) += 1;
  }
  if (positives == 0 || negatives == 0) {
    raise(ErrorCode::kUndefinedMetric, "AUC needs both classes present");
  }
}

}  // namespace

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos, neg;
  check_binary(scores, labels, pos, neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Mid-ranks over tie groups; Mann-Whitney U from the positive rank sum.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += mid;
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double auc_pr(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos, neg;
  check_binary(scores, labels, pos, neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

}  // namespace engage

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/metrics.hpp"
#include "core/ordinal.hpp"
#include "core/stgcn.hpp"

namespace engage {

/// Preprocessed samples held in memory with their labels.
struct Dataset {
  std::vector<LandmarkSequence> samples;
  std::vector<int> labels;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
};

/// Reads and preprocesses every sample of one split.
Dataset load_split(const DatasetManifest& manifest, Split split, const PreprocessConfig& cfg);
/// Wraps labeled in-memory sequences.
Dataset make_dataset(const std::vector<LandmarkSequence>& samples, const PreprocessConfig& cfg);

/// base_lr · decay^floor(epoch / decay_every), epochs counted from 0.
double lr_at(const TrainConfig& cfg, std::size_t epoch);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_accuracy;
  std::optional<double> val_mae;
  double wall_ms = 0.0;

  std::string to_json() const;
};

/// Class predictions with per-class probabilities (softmax, or the decoded
/// ordinal distribution for binary heads).
struct Predictions {
  std::vector<int> predicted;
  std::vector<std::vector<double>> probs;
};

template <class Real>
Predictions predictions_from_logits(const Tensor<Real>& logits, HeadMode mode);

template <class Real>
Predictions predict(StgcnNetwork<Real>& net, const Dataset& data, std::size_t batch_size = 32);

struct EvalReport {
  std::size_t count = 0;
  double accuracy = 0.0;
  double mae = 0.0;
  ConfusionMatrix confusion;
  std::optional<double> auc_roc;  // K = 2 only
  std::optional<double> auc_pr;
  Predictions predictions;

  std::string to_json() const;
};

EvalReport evaluate_predictions(const Predictions& p, std::span<const int> labels, int classes);

template <class Real>
EvalReport evaluate(StgcnNetwork<Real>& net, const Dataset& data, std::size_t batch_size = 32);

struct TrainHooks {
  /// Stops after this epoch (0-indexed) as if interrupted; the last
  /// checkpoint stays resumable.
  std::optional<std::size_t> stop_after_epoch;
  std::function<void(const EpochLog&)> on_epoch;
  /// Stops after the first epoch for which this returns true.
  std::function<bool(const EpochLog&)> stop_when;
};

template <class Real>
struct TrainResult {
  StgcnNetwork<Real> best;
  StgcnNetwork<Real> last;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  double best_val_mae = 0.0;
  std::vector<EpochLog> log;
};

/// Trains all parameters with softmax cross-entropy (or per-head binary
/// cross-entropy for binary_heads). When paths.out_dir is set it writes
/// metrics.jsonl, last.stgc (resumable) and best.stgc there.
template <class Real>
TrainResult<Real> train_base(const RunConfig& cfg, const FaceGraphSpec& graph, const Dataset& train,
                             const Dataset& val, const TrainHooks& hooks = {});

/// Freezes the base backbone and trains K-1 fresh binary heads on pooled
/// features computed once in eval mode. Files use the ordinal_ prefix.
template <class Real>
TrainResult<Real> train_ordinal_heads(const RunConfig& cfg, const StgcnNetwork<Real>& base,
                                      const Dataset& train, const Dataset& val,
                                      const TrainHooks& hooks = {});

extern template struct TrainResult<float>;
extern template struct TrainResult<double>;

}  // namespace engage

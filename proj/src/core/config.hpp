#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/landmarks.hpp"
#include "core/stgcn.hpp"

namespace engage {

struct DataConfig {
  std::string manifest;
  std::size_t frame_stride = 1;
  bool drop_z = false;
  std::optional<std::size_t> target_frames;
};

struct ModelConfig {
  int classes = 4;
  std::size_t temporal_kernel = 9;
  std::vector<std::size_t> channels{64, 128, 256};
  HeadMode head_mode = HeadMode::kClass;
  double dropout = 0.1;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  double base_lr = 0.001;
  std::size_t epochs = 300;
  double decay = 0.1;
  std::size_t decay_every = 100;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  bool deterministic = true;
  bool class_weighting = false;
  bool resume = false;
};

struct PathsConfig {
  std::string out_dir;
};

/// JSON run configuration. Unknown keys are rejected; every offending key is
/// listed in the error.
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  PathsConfig paths;

  static RunConfig from_json(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);
  /// Canonical JSON with every field present.
  std::string to_json() const;

  /// Sets one dotted key ("train.epochs") from a JSON literal; bare words are
  /// taken as strings.
  void set(const std::string& key, const std::string& value);

  void validate() const;
  PreprocessConfig preprocess() const;
  ArchSpec arch() const;
  /// `data.manifest` resolved against `base` when relative.
  std::filesystem::path manifest_path(const std::filesystem::path& base = {}) const;
};

}  // namespace engage

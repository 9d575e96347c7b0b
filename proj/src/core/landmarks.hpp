#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/face_template.hpp"

namespace engage {

/// One landmark recording: T frames of N nodes with (x, y, z) each.
struct LandmarkSequence {
  std::string sample_id;
  std::size_t frames = 0;
  std::size_t nodes = kNodeCount;
  std::vector<float> coords;         // frames * nodes * 3, frame-major
  std::vector<std::uint8_t> valid;   // one flag per frame
  std::optional<int> label;
  int class_count = 0;               // 0 when unknown
  float fps = 30.0f;

  float& at(std::size_t t, std::size_t n, std::size_t c) {
    return coords[(t * nodes + n) * 3 + c];
  }
  float at(std::size_t t, std::size_t n, std::size_t c) const {
    return coords[(t * nodes + n) * 3 + c];
  }

  friend bool operator==(const LandmarkSequence&, const LandmarkSequence&) = default;
};

/// Throws ErrorCode::kValidation naming the offending field.
void validate(const LandmarkSequence& seq);

inline constexpr std::size_t kFlmkHeaderBytes = 20;

std::vector<unsigned char> encode_sequence(const LandmarkSequence& seq);
LandmarkSequence decode_sequence(const std::vector<unsigned char>& bytes);

void write_sequence(const LandmarkSequence& seq, const std::filesystem::path& path);
LandmarkSequence read_sequence(const std::filesystem::path& path);

struct PreprocessConfig {
  std::size_t frame_stride = 1;
  bool drop_z = false;
  std::optional<std::size_t> target_frames;
};

LandmarkSequence preprocess(const LandmarkSequence& seq, const PreprocessConfig& cfg);

enum class Split { kTrain, kVal, kTest };
const char* to_string(Split split) noexcept;
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::filesystem::path path;
  int label = 0;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int class_count = 0;

  std::vector<ManifestEntry> split(Split which) const;
};

/// Reads a JSON Lines manifest. Relative sample paths resolve against the
/// manifest's directory. `class_count` of 0 infers K from the largest label.
DatasetManifest read_manifest(const std::filesystem::path& path, int class_count = 0);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SynthOptions {
  bool head_motion = true;
  bool eye_closure = true;
  double fps = 30.0;
  double noise_std = 0.005;
  double yaw_step = 0.15;       // rad of oscillation amplitude per class step
  double yaw_period_s = 2.0;
  double max_eye_closure = 0.8;
};

/// Samples are labeled round-robin (sample i has class i mod K). Lower
/// classes move the head more and close the eyes further.
std::vector<LandmarkSequence> generate_synthetic(std::size_t count, int class_count,
                                                 std::size_t frames, std::uint64_t seed,
                                                 const SynthOptions& options = {});

/// Writes sample files plus manifest.jsonl into `dir`. Within each class the
/// trailing `val_fraction` share of samples is tagged val.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir,
                                        std::size_t count, int class_count,
                                        std::size_t frames, std::uint64_t seed,
                                        double val_fraction = 0.2,
                                        const SynthOptions& options = {});

}  // namespace engage

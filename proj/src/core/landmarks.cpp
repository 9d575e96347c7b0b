#include "core/landmarks.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>

#include "json.hpp"

#include "core/binary_io.hpp"
#include "core/random.hpp"

namespace engage {
namespace {

constexpr char kMagic[4] = {'F', 'L', 'M', 'K'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

void validate(const LandmarkSequence& seq) {
  auto fail = [&](const std::string& field, const std::string& why) {
    raise(ErrorCode::kValidation,
          "sequence '" + seq.sample_id + "': field " + field + " " + why);
  };
  if (seq.nodes != kNodeCount) {
    fail("nodes", "must be " + std::to_string(kNodeCount) + ", got " +
                      std::to_string(seq.nodes));
  }
  if (seq.frames < 1) fail("frames", "must be at least 1");
  if (seq.coords.size() != seq.frames * seq.nodes * 3) fail("coords", "has wrong length");
  if (seq.valid.size() != seq.frames) fail("valid", "has wrong length");
  if (seq.class_count < 0 || seq.class_count > 0x7fff) fail("class_count", "out of range");
  if (seq.label) {
    if (*seq.label < 0) fail("label", "must be non-negative");
    if (seq.class_count > 0 && *seq.label >= seq.class_count) fail("label", "must be below class_count");
  }
  if (!std::isfinite(seq.fps) || seq.fps <= 0.0f) fail("fps", "must be positive");
  const std::size_t stride = seq.nodes * 3;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    if (seq.valid[t] > 1) fail("valid", "entries must be 0 or 1");
    for (std::size_t i = 0; i < stride; ++i) {
      const float v = seq.coords[t * stride + i];
      if (!std::isfinite(v)) fail("coords", "contains a non-finite value");
      if (!seq.valid[t] && v != 0.0f) {
        fail("coords", "frame " + std::to_string(t) + " is invalid but not all-zero");
      }
    }
  }
}

std::vector<unsigned char> encode_sequence(const LandmarkSequence& seq) {
  validate(seq);
  ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(seq.nodes));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.frames));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(seq.class_count));
  w.put<std::int16_t>(static_cast<std::int16_t>(seq.label.value_or(-1)));
  w.put<float>(seq.fps);
  w.put_array(seq.valid.data(), seq.valid.size());
  w.put_array(seq.coords.data(), seq.coords.size());
  return w.bytes();
}

LandmarkSequence decode_sequence(const std::vector<unsigned char>& bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    raise(ErrorCode::kBadMagic, "not an FLMK file (bad magic)");
  }
  r.get_string(4, "magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion) {
    raise(ErrorCode::kVersionMismatch,
          "unsupported FLMK version " + std::to_string(version));
  }
  LandmarkSequence seq;
  seq.nodes = r.get<std::uint16_t>("node count");
  seq.frames = r.get<std::uint32_t>("frame count");
  seq.class_count = r.get<std::uint16_t>("class count");
  const auto label = r.get<std::int16_t>("label");
  if (label >= 0) seq.label = label;
  seq.fps = r.get<float>("fps");
  seq.valid.resize(seq.frames);
  r.get_array(seq.valid.data(), seq.frames, "frame validity");
  seq.coords.resize(seq.frames * seq.nodes * 3);
  r.get_array(seq.coords.data(), seq.coords.size(), "coordinates");
  if (r.remaining() != 0) raise(ErrorCode::kParse, "trailing bytes after FLMK payload");
  return seq;
}

void write_sequence(const LandmarkSequence& seq, const std::filesystem::path& path) {
  write_file_atomic(path, encode_sequence(seq));
}

LandmarkSequence read_sequence(const std::filesystem::path& path) {
  auto seq = decode_sequence(read_file_bytes(path));
  seq.sample_id = path.stem().string();
  validate(seq);
  return seq;
}

LandmarkSequence preprocess(const LandmarkSequence& seq, const PreprocessConfig& cfg) {
  validate(seq);
  require(cfg.frame_stride >= 1, ErrorCode::kValidation, "frame_stride must be >= 1");
  require(!cfg.target_frames || *cfg.target_frames >= 1, ErrorCode::kValidation,
          "target_T must be >= 1");
  LandmarkSequence out = seq;
  const std::size_t stride = seq.nodes * 3;
  const std::size_t kept = (seq.frames + cfg.frame_stride - 1) / cfg.frame_stride;
  const std::size_t frames = cfg.target_frames.value_or(kept);
  out.frames = frames;
  out.coords.assign(frames * stride, 0.0f);
  out.valid.assign(frames, 0);
  for (std::size_t t = 0; t < std::min(kept, frames); ++t) {
    const std::size_t src = t * cfg.frame_stride;
    std::copy_n(seq.coords.begin() + static_cast<std::ptrdiff_t>(src * stride), stride,
                out.coords.begin() + static_cast<std::ptrdiff_t>(t * stride));
    out.valid[t] = seq.valid[src];
  }
  if (cfg.drop_z) {
    for (std::size_t i = 2; i < out.coords.size(); i += 3) out.coords[i] = 0.0f;
  }
  out.fps = seq.fps / static_cast<float>(cfg.frame_stride);
  return out;
}

const char* to_string(Split split) noexcept {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  raise(ErrorCode::kValidation, "unknown split tag '" + text + "'");
}

std::vector<ManifestEntry> DatasetManifest::split(Split which) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == which) out.push_back(e);
  }
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& path, int class_count) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::kIo, "cannot open manifest " + path.string());
  DatasetManifest manifest;
  const auto base = std::filesystem::absolute(path).parent_path();
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorCode::kParse, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("path") || !j.contains("label") || !j.contains("split") ||
        !j["path"].is_string() || !j["label"].is_number_integer() || !j["split"].is_string()) {
      raise(ErrorCode::kParse, where + ": expected {path, label, split}");
    }
    ManifestEntry e;
    e.path = j["path"].get<std::string>();
    if (e.path.is_relative()) e.path = base / e.path;
    e.label = j["label"].get<int>();
    e.split = parse_split(j["split"].get<std::string>());
    if (e.label < 0) raise(ErrorCode::kValidation, where + ": negative label");
    if (!std::filesystem::exists(e.path)) {
      raise(ErrorCode::kIo, where + ": sample file " + e.path.string() + " does not exist");
    }
    max_label = std::max(max_label, e.label);
    manifest.entries.push_back(std::move(e));
  }
  manifest.class_count = class_count > 0 ? class_count : max_label + 1;
  if (max_label >= manifest.class_count) {
    raise(ErrorCode::kValidation, "manifest label " + std::to_string(max_label) +
                                      " exceeds class count " +
                                      std::to_string(manifest.class_count));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::string text;
  const auto base = std::filesystem::absolute(path).parent_path();
  for (const auto& e : manifest.entries) {
    nlohmann::json j;
    auto rel = std::filesystem::absolute(e.path).lexically_relative(base);
    if (rel.empty()) rel = e.path;
    j["path"] = rel.generic_string();
    j["label"] = e.label;
    j["split"] = to_string(e.split);
    text += j.dump() + "\n";
  }
  write_file_atomic(path, text);
}

namespace {

// Pulls the upper and lower lid points of one eye (and the vertical iris
// boundary points) toward the line through the eye corners.
void close_eye(std::array<Point3, kNodeCount>& pts, std::size_t eye_begin,
               std::size_t iris_begin, double factor) {
  const Point3 a = pts[eye_begin];
  const Point3 b = pts[eye_begin + 3];
  const auto lid_line_y = [&](double x) {
    const double u = (x - a.x) / (b.x - a.x);
    return a.y + u * (b.y - a.y);
  };
  for (std::size_t i : {eye_begin + 1, eye_begin + 2, eye_begin + 4, eye_begin + 5,
                        iris_begin + 1, iris_begin + 3}) {
    pts[i].y += factor * (lid_line_y(pts[i].x) - pts[i].y);
  }
}

}  // namespace

std::vector<LandmarkSequence> generate_synthetic(std::size_t count, int class_count,
                                                 std::size_t frames, std::uint64_t seed,
                                                 const SynthOptions& options) {
  require(class_count >= 2, ErrorCode::kValidation, "synthetic data needs K >= 2");
  require(count >= static_cast<std::size_t>(class_count), ErrorCode::kValidation,
          "synthetic data needs at least K samples");
  require(frames >= 16, ErrorCode::kValidation, "synthetic data needs T >= 16");

  const auto& rest = face_template_image();
  Point3 center;
  for (const auto& p : rest) {
    center.x += p.x / kNodeCount;
    center.z += p.z / kNodeCount;
  }
  const double omega = 2.0 * std::numbers::pi / (options.yaw_period_s * options.fps);

  std::vector<LandmarkSequence> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const int k = static_cast<int>(s % static_cast<std::size_t>(class_count));
    const double steps = static_cast<double>(class_count - 1 - k);
    const double amplitude = options.head_motion ? steps * options.yaw_step : 0.0;
    const double closure =
        options.eye_closure ? steps / (class_count - 1) * options.max_eye_closure : 0.0;

    Rng rng(derive_seed(seed, {s}));
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, options.noise_std);
    const double phase = phase_dist(rng);

    auto pose = rest;
    if (closure > 0.0) {
      close_eye(pose, kLeftEyeBegin, kLeftIrisBegin, closure);
      close_eye(pose, kRightEyeBegin, kRightIrisBegin, closure);
    }

    LandmarkSequence seq;
    seq.sample_id = "synth_" + std::to_string(s);
    seq.frames = frames;
    seq.nodes = kNodeCount;
    seq.coords.resize(frames * kNodeCount * 3);
    seq.valid.assign(frames, 1);
    seq.label = k;
    seq.class_count = class_count;
    seq.fps = static_cast<float>(options.fps);
    for (std::size_t t = 0; t < frames; ++t) {
      const double yaw = amplitude * std::sin(omega * static_cast<double>(t) + phase);
      const double c = std::cos(yaw);
      const double sn = std::sin(yaw);
      for (std::size_t n = 0; n < kNodeCount; ++n) {
        const double dx = pose[n].x - center.x;
        const double dz = pose[n].z - center.z;
        const double x = center.x + dx * c + dz * sn;
        const double z = center.z - dx * sn + dz * c;
        seq.at(t, n, 0) = static_cast<float>(x + noise(rng));
        seq.at(t, n, 1) = static_cast<float>(pose[n].y + noise(rng));
        seq.at(t, n, 2) = static_cast<float>(z + noise(rng));
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, std::size_t count,
                                        int class_count, std::size_t frames,
                                        std::uint64_t seed, double val_fraction,
                                        const SynthOptions& options) {
  require(val_fraction >= 0.0 && val_fraction < 1.0, ErrorCode::kValidation,
          "val_fraction must be in [0, 1)");
  const auto samples = generate_synthetic(count, class_count, frames, seed, options);
  std::filesystem::create_directories(dir);

  std::map<int, std::size_t> per_class;
  for (const auto& s : samples) ++per_class[*s.label];
  std::map<int, std::size_t> seen;

  DatasetManifest manifest;
  manifest.class_count = class_count;
  for (const auto& s : samples) {
    const int k = *s.label;
    const auto train_quota = static_cast<std::size_t>(
        std::llround(static_cast<double>(per_class[k]) * (1.0 - val_fraction)));
    const std::size_t index = seen[k]++;
    const auto file = dir / (s.sample_id + ".flmk");
    write_sequence(s, file);
    manifest.entries.push_back({file, k, index < train_quota ? Split::kTrain : Split::kVal});
  }
  write_manifest(manifest, dir / "manifest.jsonl");
  return manifest;
}

}  // namespace engage

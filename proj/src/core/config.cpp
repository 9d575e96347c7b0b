#include "core/config.hpp"

#include <map>
#include <set>

#include "core/binary_io.hpp"
#include "core/error.hpp"
#include "json.hpp"

namespace engage {
namespace {

using nlohmann::json;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"data", {"manifest", "frame_stride", "drop_z", "target_T"}},
      {"model", {"K", "temporal_kernel", "channels", "head_mode", "dropout"}},
      {"train",
       {"batch_size", "base_lr", "epochs", "decay", "decay_every", "seed", "eval_every",
        "deterministic", "class_weighting", "resume"}},
      {"paths", {"out_dir"}},
  };
  return keys;
}

void collect_unknown(const json& doc, std::vector<std::string>& bad) {
  const auto& keys = known_keys();
  for (const auto& [section, body] : doc.items()) {
    auto it = keys.find(section);
    if (it == keys.end()) {
      bad.push_back(section);
      continue;
    }
    if (!body.is_object()) {
      bad.push_back(section + " (not an object)");
      continue;
    }
    for (const auto& [key, value] : body.items()) {
      if (!it->second.count(key)) bad.push_back(section + "." + key);
    }
  }
}

template <class T>
void read(const json& section, const char* key, T& out, const std::string& where,
          std::vector<std::string>& bad) {
  if (!section.contains(key)) return;
  try {
    out = section.at(key).get<T>();
  } catch (const json::exception&) {
    bad.push_back(where + "." + key + " (wrong type)");
  }
}

json section_or_empty(const json& doc, const char* name) {
  return doc.contains(name) && doc.at(name).is_object() ? doc.at(name) : json::object();
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    raise(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) raise(ErrorCode::kConfig, "config must be a JSON object");

  std::vector<std::string> bad;
  collect_unknown(doc, bad);
  if (!bad.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : bad) msg += " " + k;
    raise(ErrorCode::kConfig, msg);
  }

  RunConfig c;
  const json data = section_or_empty(doc, "data");
  read(data, "manifest", c.data.manifest, "data", bad);
  read(data, "frame_stride", c.data.frame_stride, "data", bad);
  read(data, "drop_z", c.data.drop_z, "data", bad);
  if (data.contains("target_T") && !data.at("target_T").is_null()) {
    std::size_t t = 0;
    read(data, "target_T", t, "data", bad);
    c.data.target_frames = t;
  }

  const json model = section_or_empty(doc, "model");
  read(model, "K", c.model.classes, "model", bad);
  read(model, "temporal_kernel", c.model.temporal_kernel, "model", bad);
  read(model, "channels", c.model.channels, "model", bad);
  read(model, "dropout", c.model.dropout, "model", bad);
  if (model.contains("head_mode")) {
    std::string mode;
    read(model, "head_mode", mode, "model", bad);
    try {
      c.model.head_mode = parse_head_mode(mode);
    } catch (const Error&) {
      bad.push_back("model.head_mode (expected kclass or binary_heads)");
    }
  }

  const json train = section_or_empty(doc, "train");
  read(train, "batch_size", c.train.batch_size, "train", bad);
  read(train, "base_lr", c.train.base_lr, "train", bad);
  read(train, "epochs", c.train.epochs, "train", bad);
  read(train, "decay", c.train.decay, "train", bad);
  read(train, "decay_every", c.train.decay_every, "train", bad);
  read(train, "seed", c.train.seed, "train", bad);
  read(train, "eval_every", c.train.eval_every, "train", bad);
  read(train, "deterministic", c.train.deterministic, "train", bad);
  read(train, "class_weighting", c.train.class_weighting, "train", bad);
  read(train, "resume", c.train.resume, "train", bad);

  const json paths = section_or_empty(doc, "paths");
  read(paths, "out_dir", c.paths.out_dir, "paths", bad);

  if (!bad.empty()) {
    std::string msg = "invalid config values:";
    for (const auto& k : bad) msg += " " + k;
    raise(ErrorCode::kConfig, msg);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    raise(ErrorCode::kConfig, e.what());
  }
  return from_json(text);
}

std::string RunConfig::to_json() const {
  json j;
  j["data"] = {{"manifest", data.manifest},
               {"frame_stride", data.frame_stride},
               {"drop_z", data.drop_z},
               {"target_T", data.target_frames ? json(*data.target_frames) : json(nullptr)}};
  j["model"] = {{"K", model.classes},
                {"temporal_kernel", model.temporal_kernel},
                {"channels", model.channels},
                {"head_mode", to_string(model.head_mode)},
                {"dropout", model.dropout}};
  j["train"] = {{"batch_size", train.batch_size},   {"base_lr", train.base_lr},
                {"epochs", train.epochs},           {"decay", train.decay},
                {"decay_every", train.decay_every}, {"seed", train.seed},
                {"eval_every", train.eval_every},   {"deterministic", train.deterministic},
                {"class_weighting", train.class_weighting}, {"resume", train.resume}};
  j["paths"] = {{"out_dir", paths.out_dir}};
  return j.dump();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  if (dot == std::string::npos) raise(ErrorCode::kConfig, "override key must be section.key: " + key);
  json literal;
  try {
    literal = json::parse(value);
  } catch (const json::exception&) {
    literal = value;
  }
  json doc = json::parse(to_json());
  doc[key.substr(0, dot)][key.substr(dot + 1)] = literal;
  *this = from_json(doc.dump());
}

void RunConfig::validate() const {
  std::vector<std::string> bad;
  if (data.frame_stride == 0) bad.push_back("data.frame_stride (must be >= 1)");
  if (data.target_frames && *data.target_frames == 0) bad.push_back("data.target_T (must be >= 1)");
  if (model.classes < 2) bad.push_back("model.K (must be >= 2)");
  if (model.temporal_kernel == 0 || model.temporal_kernel % 2 == 0)
    bad.push_back("model.temporal_kernel (must be odd)");
  if (model.channels.empty()) bad.push_back("model.channels (must be non-empty)");
  for (auto c : model.channels) {
    if (c == 0) {
      bad.push_back("model.channels (entries must be positive)");
      break;
    }
  }
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) bad.push_back("model.dropout (must be in [0, 1))");
  if (train.batch_size == 0) bad.push_back("train.batch_size (must be >= 1)");
  if (!(train.base_lr > 0.0)) bad.push_back("train.base_lr (must be positive)");
  if (train.epochs == 0) bad.push_back("train.epochs (must be >= 1)");
  if (!(train.decay > 0.0 && train.decay <= 1.0)) bad.push_back("train.decay (must be in (0, 1])");
  if (train.decay_every == 0) bad.push_back("train.decay_every (must be >= 1)");
  if (train.eval_every == 0) bad.push_back("train.eval_every (must be >= 1)");
  if (!bad.empty()) {
    std::string msg = "invalid config values:";
    for (const auto& k : bad) msg += " " + k;
    raise(ErrorCode::kConfig, msg);
  }
}

PreprocessConfig RunConfig::preprocess() const {
  PreprocessConfig p;
  p.frame_stride = data.frame_stride;
  p.drop_z = data.drop_z;
  p.target_frames = data.target_frames;
  return p;
}

ArchSpec RunConfig::arch() const {
  // drop_z zeroes the depth channel rather than removing it.
  return ArchSpec::standard(model.classes, model.head_mode, model.channels, model.temporal_kernel,
                            model.dropout);
}

std::filesystem::path RunConfig::manifest_path(const std::filesystem::path& base) const {
  std::filesystem::path p(data.manifest);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

}  // namespace engage

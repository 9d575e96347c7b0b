#include "engage/engage.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "core/config.hpp"
#include "core/error.hpp"
#include "core/explain.hpp"
#include "core/face_graph.hpp"
#include "core/landmarks.hpp"
#include "core/parallel.hpp"
#include "core/trainer.hpp"
#include "json.hpp"

struct engage_sequence {
  engage::LandmarkSequence seq;
};

struct engage_model {
  engage::Container container;
  engage::RunConfig config;
  std::string config_text;
  engage::StgcnNetwork<float> net;
};

namespace {

using nlohmann::ordered_json;

thread_local std::string g_last_error;

engage_status to_status(engage::ErrorCode code) {
  using engage::ErrorCode;
  switch (code) {
    case ErrorCode::kValidation: return ENGAGE_ERR_VALIDATION;
    case ErrorCode::kDegenerate: return ENGAGE_ERR_DEGENERATE;
    case ErrorCode::kShape: return ENGAGE_ERR_SHAPE;
    case ErrorCode::kOutOfRange: return ENGAGE_ERR_OUT_OF_RANGE;
    case ErrorCode::kIo: return ENGAGE_ERR_IO;
    case ErrorCode::kBadMagic: return ENGAGE_ERR_BAD_MAGIC;
    case ErrorCode::kVersionMismatch: return ENGAGE_ERR_VERSION_MISMATCH;
    case ErrorCode::kTruncated: return ENGAGE_ERR_TRUNCATED;
    case ErrorCode::kParse: return ENGAGE_ERR_PARSE;
    case ErrorCode::kFingerprint: return ENGAGE_ERR_FINGERPRINT;
    case ErrorCode::kConfig: return ENGAGE_ERR_CONFIG;
    case ErrorCode::kNumeric: return ENGAGE_ERR_NUMERIC;
    case ErrorCode::kUndefinedMetric: return ENGAGE_ERR_UNDEFINED_METRIC;
  }
  return ENGAGE_ERR_INTERNAL;
}

struct BadArgument {
  std::string message;
};

template <class F>
engage_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return ENGAGE_OK;
  } catch (const engage::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const BadArgument& e) {
    g_last_error = e.message;
    return ENGAGE_ERR_INVALID_ARGUMENT;
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return ENGAGE_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ENGAGE_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ENGAGE_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return ENGAGE_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw BadArgument{std::string(what) + " must not be NULL"};
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

engage::RunConfig config_from_checkpoint(const engage::Container& c, std::string& text) {
  const auto* rec = c.find("meta.config");
  text = rec ? rec->to_text() : "{}";
  return engage::RunConfig::from_json(text);
}

ordered_json config_object(const std::string& text) {
  return ordered_json::parse(text.empty() ? "{}" : text);
}


struct LoadedData {
  engage::Dataset train;
  engage::Dataset val;
};

LoadedData load_data(const engage::RunConfig& cfg) {
  if (cfg.data.manifest.empty()) engage::raise(engage::ErrorCode::kConfig, "data.manifest is required");
  if (cfg.paths.out_dir.empty()) engage::raise(engage::ErrorCode::kConfig, "paths.out_dir is required");
  const auto manifest = engage::read_manifest(cfg.data.manifest, cfg.model.classes);
  const auto pre = cfg.preprocess();
  return {engage::load_split(manifest, engage::Split::kTrain, pre),
          engage::load_split(manifest, engage::Split::kVal, pre)};
}

template <class Result>
std::string train_summary(const engage::RunConfig& cfg, const Result& r, const std::string& prefix) {
  const std::filesystem::path dir(cfg.paths.out_dir);
  ordered_json j;
  j["checkpoint"] = (dir / (prefix + "best.stgc")).string();
  j["last_checkpoint"] = (dir / (prefix + "last.stgc")).string();
  j["metrics_log"] = (dir / (prefix + "metrics.jsonl")).string();
  j["epochs_logged"] = r.log.size();
  j["best_epoch"] = r.best_epoch;
  j["best_val_accuracy"] = r.best_val_accuracy;
  j["best_val_mae"] = r.best_val_mae;
  j["parameters"] = r.best.count_parameters().total;
  j["config"] = config_object(cfg.to_json());
  return j.dump();
}

}  // namespace

extern "C" {

const char* engage_last_error(void) { return g_last_error.c_str(); }

const char* engage_status_name(engage_status status) {
  switch (status) {
    case ENGAGE_OK: return "ok";
    case ENGAGE_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case ENGAGE_ERR_INTERNAL: return "internal";
    default: break;
  }
  if (status > ENGAGE_OK && status < ENGAGE_ERR_INVALID_ARGUMENT) {
    return engage::to_string(static_cast<engage::ErrorCode>(status - 1));
  }
  return "unknown";
}

int engage_exit_code(engage_status status) {
  switch (status) {
    case ENGAGE_OK: return 0;
    case ENGAGE_ERR_CONFIG:
    case ENGAGE_ERR_INVALID_ARGUMENT: return 2;
    case ENGAGE_ERR_NUMERIC: return 4;
    case ENGAGE_ERR_INTERNAL: return 1;
    default: return 3;
  }
}

void engage_string_free(char* s) { std::free(s); }

int engage_set_threads(int threads) {
  if (threads <= 0) return engage::configure_threads_from_env();
  engage::set_thread_count(threads);
  return engage::thread_count();
}

engage_status engage_graph_export_json(char** out_json) {
  return guarded([&] {
    need(out_json, "out_json");
    *out_json = dup_string(engage::export_graph_json(engage::default_face_graph()));
  });
}

engage_status engage_config_resolve(const char* config_json, const char* const* overrides,
                                    size_t override_count, char** out_json) {
  return guarded([&] {
    need(config_json, "config_json");
    need(out_json, "out_json");
    if (override_count) need(overrides, "overrides");
    auto cfg = engage::RunConfig::from_json(config_json);
    for (size_t i = 0; i < override_count; ++i) {
      const std::string o = overrides[i];
      const auto eq = o.find('=');
      if (eq == std::string::npos) {
        engage::raise(engage::ErrorCode::kConfig, "override must be section.key=value: " + o);
      }
      cfg.set(o.substr(0, eq), o.substr(eq + 1));
    }
    *out_json = dup_string(cfg.to_json());
  });
}

engage_status engage_sequence_read(const char* path, engage_sequence** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new engage_sequence{engage::read_sequence(path)};
  });
}

engage_status engage_sequence_write(const engage_sequence* seq, const char* path) {
  return guarded([&] {
    need(seq, "seq");
    need(path, "path");
    engage::write_sequence(seq->seq, path);
  });
}

engage_status engage_sequence_create(const char* sample_id, uint32_t frames, uint16_t nodes,
                                     const float* coords, const uint8_t* valid, int label, float fps,
                                     engage_sequence** out) {
  return guarded([&] {
    need(coords, "coords");
    need(out, "out");
    engage::LandmarkSequence s;
    s.sample_id = sample_id ? sample_id : "";
    s.frames = frames;
    s.nodes = nodes;
    s.coords.assign(coords, coords + static_cast<std::size_t>(frames) * nodes * 3);
    s.valid.assign(frames, 1);
    if (valid) s.valid.assign(valid, valid + frames);
    if (label >= 0) s.label = label;
    s.fps = fps;
    engage::validate(s);
    *out = new engage_sequence{std::move(s)};
  });
}

engage_status engage_sequence_info(const engage_sequence* seq, uint32_t* frames, uint16_t* nodes,
                                   int* label) {
  return guarded([&] {
    need(seq, "seq");
    if (frames) *frames = static_cast<uint32_t>(seq->seq.frames);
    if (nodes) *nodes = static_cast<uint16_t>(seq->seq.nodes);
    if (label) *label = seq->seq.label.value_or(-1);
  });
}

void engage_sequence_free(engage_sequence* seq) { delete seq; }

engage_status engage_synth(const char* out_dir, size_t samples, int classes, size_t frames,
                           uint64_t seed, double val_fraction, int eye_closure_only,
                           char** out_summary_json) {
  return guarded([&] {
    need(out_dir, "out_dir");
    engage::SynthOptions opts;
    if (eye_closure_only) opts.head_motion = false;
    const auto m = engage::write_synthetic_dataset(out_dir, samples, classes, frames, seed,
                                                   val_fraction, opts);
    if (out_summary_json) {
      ordered_json j;
      j["out_dir"] = out_dir;
      j["manifest"] = (std::filesystem::path(out_dir) / "manifest.jsonl").string();
      j["samples"] = m.entries.size();
      j["train"] = m.split(engage::Split::kTrain).size();
      j["val"] = m.split(engage::Split::kVal).size();
      j["classes"] = classes;
      j["frames"] = frames;
      j["seed"] = seed;
      *out_summary_json = dup_string(j.dump());
    }
  });
}

engage_status engage_train(const char* config_json, char** out_summary_json) {
  return guarded([&] {
    need(config_json, "config_json");
    const auto cfg = engage::RunConfig::from_json(config_json);
    const auto data = load_data(cfg);
    const auto r = engage::train_base<float>(cfg, engage::default_face_graph(), data.train, data.val);
    if (out_summary_json) *out_summary_json = dup_string(train_summary(cfg, r, ""));
  });
}

engage_status engage_train_ordinal(const char* config_json, const char* base_checkpoint,
                                   char** out_summary_json) {
  return guarded([&] {
    need(config_json, "config_json");
    need(base_checkpoint, "base_checkpoint");
    const auto cfg = engage::RunConfig::from_json(config_json);
    auto base_arch = cfg.arch();
    base_arch.head_mode = engage::HeadMode::kClass;
    const auto& graph = engage::default_face_graph();
    const auto container = engage::read_container(base_checkpoint);
    const auto base = engage::network_from_container<float>(container, graph, base_arch);
    const auto data = load_data(cfg);
    const auto r = engage::train_ordinal_heads<float>(cfg, base, data.train, data.val);
    if (out_summary_json) *out_summary_json = dup_string(train_summary(cfg, r, "ordinal_"));
  });
}

engage_status engage_model_load(const char* path, engage_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto c = engage::read_container(path);
    std::string text;
    auto cfg = config_from_checkpoint(c, text);
    auto net = engage::network_from_container<float>(c, engage::default_face_graph());
    *out = new engage_model{std::move(c), std::move(cfg), std::move(text), std::move(net)};
  });
}

void engage_model_free(engage_model* model) { delete model; }

engage_status engage_model_info_json(const engage_model* model, char** out_json) {
  return guarded([&] {
    need(model, "model");
    need(out_json, "out_json");
    const auto count = model->net.count_parameters();
    ordered_json j;
    j["fingerprint"] = engage::to_hex(model->container.fingerprint);
    j["arch"] = ordered_json::parse(model->net.arch().to_json());
    j["parameters"] = count.total;
    j["config"] = config_object(model->config_text);
    *out_json = dup_string(j.dump());
  });
}

engage_status engage_model_infer(engage_model* model, const engage_sequence* seq, char** out_json) {
  return guarded([&] {
    need(model, "model");
    need(seq, "seq");
    need(out_json, "out_json");
    auto s = engage::preprocess(seq->seq, model->config.preprocess());
    const engage::LandmarkSequence* one[] = {&s};
    const auto x =
        engage::batch_from_sequences<float>(std::span<const engage::LandmarkSequence* const>(one));
    const auto p =
        engage::predictions_from_logits(model->net.predict_logits(x), model->net.arch().head_mode);
    ordered_json j;
    j["sample_id"] = s.sample_id;
    j["predicted"] = p.predicted[0];
    j["probabilities"] = p.probs[0];
    j["head_mode"] = engage::to_string(model->net.arch().head_mode);
    if (s.label) j["label"] = *s.label;
    *out_json = dup_string(j.dump());
  });
}

engage_status engage_model_eval(engage_model* model, const char* manifest_path, const char* split,
                                char** out_json) {
  return guarded([&] {
    need(model, "model");
    need(manifest_path, "manifest_path");
    need(out_json, "out_json");
    const auto which = engage::parse_split(split ? split : "val");
    const auto manifest = engage::read_manifest(manifest_path, model->net.arch().classes);
    const auto data = engage::load_split(manifest, which, model->config.preprocess());
    if (data.empty()) {
      engage::raise(engage::ErrorCode::kValidation,
                    std::string("split ") + engage::to_string(which) + " of " + manifest_path +
                        " is empty");
    }
    const auto r = engage::evaluate(model->net, data);
    auto j = ordered_json::parse(r.to_json());
    j["split"] = engage::to_string(which);
    j["manifest"] = manifest_path;
    j["head_mode"] = engage::to_string(model->net.arch().head_mode);
    j["config"] = config_object(model->config_text);
    *out_json = dup_string(j.dump());
  });
}

engage_status engage_model_explain(engage_model* model, const engage_sequence* seq, int target_class,
                                   int point_cloud, char** out_json) {
  return guarded([&] {
    need(model, "model");
    need(seq, "seq");
    need(out_json, "out_json");
    auto s = engage::preprocess(seq->seq, model->config.preprocess());
    const auto map = engage::grad_cam(model->net, s, target_class);
    *out_json = dup_string(point_cloud ? engage::saliency_point_cloud_json(map, s)
                                       : engage::saliency_to_json(map));
  });
}

}  // extern "C"

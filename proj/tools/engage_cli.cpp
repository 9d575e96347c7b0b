#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "engage/engage.h"

namespace {

namespace fs = std::filesystem;

struct Failure {
  engage_status status;
};

// Failure detected by the CLI itself rather than the library.
struct LocalFailure {
  engage_status status;
  std::string message;
};

// Owns a string returned by the library.
struct Owned {
  char* p = nullptr;
  ~Owned() { engage_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

void check(engage_status s) {
  if (s != ENGAGE_OK) throw Failure{s};
}

std::string escape_json(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

int report_failure(engage_status s, const std::string& message) {
  std::cerr << "{\"error\":\"" << engage_status_name(s) << "\",\"message\":\"" << escape_json(message)
            << "\"}\n";
  return engage_exit_code(s);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LocalFailure{ENGAGE_ERR_CONFIG, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const std::string& path, const std::string& text) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

void emit(const std::string& json, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << json;
    if (json.empty() || json.back() != '\n') std::cout << '\n';
  } else {
    write_atomic(out_path, json.back() == '\n' ? json : json + "\n");
  }
}

struct TrainFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> batch_size;
  std::optional<double> base_lr;
  std::string out_dir;
  std::string manifest;
  bool resume = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config, "Run config JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "Override a config value: section.key=value (repeatable)");
    cmd->add_option("--epochs", epochs, "Override train.epochs");
    cmd->add_option("--seed", seed, "Override train.seed");
    cmd->add_option("--batch-size", batch_size, "Override train.batch_size");
    cmd->add_option("--base-lr", base_lr, "Override train.base_lr");
    cmd->add_option("--out-dir", out_dir, "Override paths.out_dir");
    cmd->add_option("--manifest", manifest, "Override data.manifest");
    cmd->add_flag("--resume", resume, "Continue from last checkpoint in the output directory");
  }

  std::string resolve() const {
    std::vector<std::string> all = sets;
    if (epochs) all.push_back("train.epochs=" + std::to_string(*epochs));
    if (seed) all.push_back("train.seed=" + std::to_string(*seed));
    if (batch_size) all.push_back("train.batch_size=" + std::to_string(*batch_size));
    if (base_lr) {
      std::ostringstream v;
      v.precision(17);
      v << *base_lr;
      all.push_back("train.base_lr=" + v.str());
    }
    if (!out_dir.empty()) all.push_back("paths.out_dir=\"" + escape_json(out_dir) + "\"");
    if (!manifest.empty()) all.push_back("data.manifest=\"" + escape_json(manifest) + "\"");
    if (resume) all.push_back("train.resume=true");
    std::vector<const char*> ptrs;
    for (const auto& s : all) ptrs.push_back(s.c_str());
    Owned out;
    check(engage_config_resolve(read_file(config).c_str(), ptrs.data(), ptrs.size(), &out.p));
    return out.str();
  }
};

struct ModelHandle {
  engage_model* m = nullptr;
  explicit ModelHandle(const std::string& path) { check(engage_model_load(path.c_str(), &m)); }
  ~ModelHandle() { engage_model_free(m); }
};

struct SequenceHandle {
  engage_sequence* s = nullptr;
  explicit SequenceHandle(const std::string& path) { check(engage_sequence_read(path.c_str(), &s)); }
  ~SequenceHandle() { engage_sequence_free(s); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Engagement classification from facial landmark sequences"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: ENGAGE_THREADS or all cores)");

  auto* graph = app.add_subcommand("graph", "Face graph utilities");
  graph->require_subcommand(1);
  auto* graph_export = graph->add_subcommand("export", "Write the face graph as JSON");
  std::string graph_out;
  graph_export->add_option("--out", graph_out, "Output path (stdout when omitted)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  std::size_t samples = 1000, frames = 128;
  int classes = 4;
  std::uint64_t synth_seed = 0;
  double val_fraction = 0.2;
  bool eye_only = false;
  std::string synth_out;
  synth->add_option("--samples", samples, "Number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--classes", classes, "Number of classes K")->check(CLI::Range(2, 32));
  synth->add_option("--frames", frames, "Frames per sample")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--val-fraction", val_fraction, "Share of each class tagged val")->check(CLI::Range(0.0, 1.0));
  synth->add_flag("--eye-closure-only", eye_only, "Only eye closure carries the class signal");
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train the K-class network");
  TrainFlags train_flags;
  train_flags.add_to(train);

  auto* train_ord = app.add_subcommand("train-ordinal", "Train ordinal heads on a frozen backbone");
  TrainFlags ord_flags;
  ord_flags.add_to(train_ord);
  std::string base_ckpt;
  train_ord->add_option("--base", base_ckpt, "K-class checkpoint")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one manifest split");
  std::string eval_ckpt, eval_manifest, eval_split = "val", eval_out;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  eval->add_option("--manifest", eval_manifest, "Manifest (JSON Lines)")->required();
  eval->add_option("--split", eval_split, "train, val or test");
  eval->add_option("--out", eval_out, "Also write the report here");

  auto* infer = app.add_subcommand("infer", "Classify one landmark file");
  std::string infer_ckpt, infer_sample;
  infer->add_option("--ckpt", infer_ckpt, "Checkpoint")->required();
  infer->add_option("--sample", infer_sample, "FLMK file")->required();

  auto* explain = app.add_subcommand("explain", "Grad-CAM saliency for one sample");
  std::string ex_ckpt, ex_sample, ex_out, ex_cloud;
  int ex_class = 0;
  explain->add_option("--ckpt", ex_ckpt, "Checkpoint")->required();
  explain->add_option("--sample", ex_sample, "FLMK file")->required();
  explain->add_option("--class", ex_class, "Target class")->required();
  explain->add_option("--out", ex_out, "Saliency JSON path")->required();
  explain->add_option("--point-cloud", ex_cloud, "Also write per-frame coordinates with saliency");

  auto* info = app.add_subcommand("info", "Describe a checkpoint");
  std::string info_ckpt;
  info->add_option("--ckpt", info_ckpt, "Checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    engage_set_threads(threads);
    if (graph_export->parsed()) {
      Owned j;
      check(engage_graph_export_json(&j.p));
      emit(j.str(), graph_out);
    } else if (synth->parsed()) {
      Owned j;
      check(engage_synth(synth_out.c_str(), samples, classes, frames, synth_seed, val_fraction,
                         eye_only ? 1 : 0, &j.p));
      emit(j.str(), "");
    } else if (train->parsed()) {
      const auto cfg = train_flags.resolve();
      Owned j;
      check(engage_train(cfg.c_str(), &j.p));
      emit(j.str(), "");
    } else if (train_ord->parsed()) {
      const auto cfg = ord_flags.resolve();
      Owned j;
      check(engage_train_ordinal(cfg.c_str(), base_ckpt.c_str(), &j.p));
      emit(j.str(), "");
    } else if (eval->parsed()) {
      ModelHandle model(eval_ckpt);
      Owned j;
      check(engage_model_eval(model.m, eval_manifest.c_str(), eval_split.c_str(), &j.p));
      emit(j.str(), "");
      if (!eval_out.empty()) emit(j.str(), eval_out);
    } else if (infer->parsed()) {
      ModelHandle model(infer_ckpt);
      SequenceHandle seq(infer_sample);
      Owned j;
      check(engage_model_infer(model.m, seq.s, &j.p));
      emit(j.str(), "");
    } else if (explain->parsed()) {
      ModelHandle model(ex_ckpt);
      SequenceHandle seq(ex_sample);
      Owned j;
      check(engage_model_explain(model.m, seq.s, ex_class, 0, &j.p));
      emit(j.str(), ex_out);
      if (!ex_cloud.empty()) {
        Owned pc;
        check(engage_model_explain(model.m, seq.s, ex_class, 1, &pc.p));
        emit(pc.str(), ex_cloud);
      }
    } else if (info->parsed()) {
      ModelHandle model(info_ckpt);
      Owned j;
      check(engage_model_info_json(model.m, &j.p));
      emit(j.str(), "");
    }
  } catch (const Failure& f) {
    return report_failure(f.status, engage_last_error());
  } catch (const LocalFailure& f) {
    return report_failure(f.status, f.message);
  } catch (const std::exception& e) {
    return report_failure(ENGAGE_ERR_IO, e.what());
  }
  return 0;
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "engage/engage.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json take(char* s) {
  REQUIRE(s != nullptr);
  auto j = json::parse(s);
  engage_string_free(s);
  return j;
}

fs::path fresh(const std::string& name) {
  auto d = fs::temp_directory_path() / ("engage_capi_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string small_config(const fs::path& manifest, const fs::path& out) {
  json j;
  j["data"] = {{"manifest", manifest.string()}};
  j["model"] = {{"channels", {4, 8}}, {"temporal_kernel", 3}};
  j["train"] = {{"epochs", 2}, {"batch_size", 8}, {"seed", 3}, {"base_lr", 0.01}};
  j["paths"] = {{"out_dir", out.string()}};
  return j.dump();
}

// One trained model shared by the cases below.
struct Trained {
  fs::path dir = fresh("trained");
  json synth, summary;
  Trained() {
    char* out = nullptr;
    REQUIRE(engage_synth((dir / "data").c_str(), 24, 4, 16, 1, 0.25, 0, &out) == ENGAGE_OK);
    synth = take(out);
    REQUIRE(engage_train(small_config(synth["manifest"].get<std::string>(), dir / "run").c_str(), &out) ==
            ENGAGE_OK);
    summary = take(out);
  }
};

const Trained& trained() {
  static const Trained t;
  return t;
}

}  // namespace

TEST_CASE("status names and exit codes") {
  CHECK(std::string(engage_status_name(ENGAGE_OK)) == "ok");
  CHECK(std::string(engage_status_name(ENGAGE_ERR_BAD_MAGIC)) == "bad_magic");
  CHECK(engage_exit_code(ENGAGE_OK) == 0);
  CHECK(engage_exit_code(ENGAGE_ERR_CONFIG) == 2);
  CHECK(engage_exit_code(ENGAGE_ERR_INVALID_ARGUMENT) == 2);
  CHECK(engage_exit_code(ENGAGE_ERR_IO) == 3);
  CHECK(engage_exit_code(ENGAGE_ERR_FINGERPRINT) == 3);
  CHECK(engage_exit_code(ENGAGE_ERR_NUMERIC) == 4);
  CHECK(engage_exit_code(ENGAGE_ERR_INTERNAL) == 1);
  CHECK(engage_set_threads(1) == 1);
}

TEST_CASE("graph export") {
  char* out = nullptr;
  REQUIRE(engage_graph_export_json(&out) == ENGAGE_OK);
  CHECK(take(out)["node_count"] == 78);
}

TEST_CASE("config resolution applies overrides and lists bad keys") {
  char* out = nullptr;
  const char* overrides[] = {"train.epochs=7", "model.head_mode=binary_heads"};
  REQUIRE(engage_config_resolve("{}", overrides, 2, &out) == ENGAGE_OK);
  const auto j = take(out);
  CHECK(j["train"]["epochs"] == 7);
  CHECK(j["model"]["head_mode"] == "binary_heads");

  CHECK(engage_config_resolve(R"({"train":{"bogus":1,"also":2}})", nullptr, 0, &out) == ENGAGE_ERR_CONFIG);
  const std::string msg = engage_last_error();
  CHECK(msg.find("train.bogus") != std::string::npos);
  CHECK(msg.find("train.also") != std::string::npos);
  CHECK(engage_config_resolve("{not json", nullptr, 0, &out) == ENGAGE_ERR_CONFIG);
  CHECK(engage_config_resolve(nullptr, nullptr, 0, &out) == ENGAGE_ERR_INVALID_ARGUMENT);
}

TEST_CASE("sequence create, write, read") {
  const auto dir = fresh("seq");
  std::vector<float> coords(2 * 78 * 3, 0.25f);
  engage_sequence* s = nullptr;
  REQUIRE(engage_sequence_create("abc", 2, 78, coords.data(), nullptr, 1, 30.0f, &s) == ENGAGE_OK);
  REQUIRE(engage_sequence_write(s, (dir / "abc.flmk").c_str()) == ENGAGE_OK);
  engage_sequence_free(s);
  CHECK(fs::file_size(dir / "abc.flmk") == 20 + 2 + 2 * 78 * 12);

  engage_sequence* r = nullptr;
  REQUIRE(engage_sequence_read((dir / "abc.flmk").c_str(), &r) == ENGAGE_OK);
  uint32_t frames = 0;
  uint16_t nodes = 0;
  int label = -5;
  REQUIRE(engage_sequence_info(r, &frames, &nodes, &label) == ENGAGE_OK);
  CHECK(frames == 2);
  CHECK(nodes == 78);
  CHECK(label == 1);
  engage_sequence_free(r);

  CHECK(engage_sequence_read((dir / "missing.flmk").c_str(), &r) == ENGAGE_ERR_IO);
  {
    std::ofstream bad(dir / "bad.flmk", std::ios::binary);
    bad << "NOPE and some more bytes to get past the header";
  }
  CHECK(engage_sequence_read((dir / "bad.flmk").c_str(), &r) == ENGAGE_ERR_BAD_MAGIC);
  coords[3] = NAN;
  CHECK(engage_sequence_create("x", 2, 78, coords.data(), nullptr, 0, 30.0f, &s) == ENGAGE_ERR_VALIDATION);
}

TEST_CASE("train, load, infer, eval and explain") {
  const auto& t = trained();
  CHECK(t.synth["train"] == 20);
  CHECK(t.synth["val"] == 4);
  CHECK(t.summary["epochs_logged"] == 2);
  CHECK(fs::exists(t.summary["checkpoint"].get<std::string>()));

  engage_model* m = nullptr;
  REQUIRE(engage_model_load(t.summary["checkpoint"].get<std::string>().c_str(), &m) == ENGAGE_OK);
  char* out = nullptr;
  REQUIRE(engage_model_info_json(m, &out) == ENGAGE_OK);
  const auto info = take(out);
  CHECK(info["parameters"] == t.summary["parameters"]);
  CHECK(info["fingerprint"].get<std::string>().size() == 64);

  engage_sequence* s = nullptr;
  REQUIRE(engage_sequence_read((t.dir / "data" / "synth_0.flmk").c_str(), &s) == ENGAGE_OK);
  REQUIRE(engage_model_infer(m, s, &out) == ENGAGE_OK);
  const auto inf = take(out);
  double sum = 0.0;
  for (double p : inf["probabilities"]) sum += p;
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK(inf["probabilities"].size() == 4);

  REQUIRE(engage_model_eval(m, t.synth["manifest"].get<std::string>().c_str(), "val", &out) == ENGAGE_OK);
  const auto ev = take(out);
  CHECK(ev["count"] == 4);
  CHECK(ev["split"] == "val");
  CHECK(engage_model_eval(m, t.synth["manifest"].get<std::string>().c_str(), "holdout", &out) ==
        ENGAGE_ERR_VALIDATION);

  REQUIRE(engage_model_explain(m, s, 0, 0, &out) == ENGAGE_OK);
  const auto sal = take(out);
  CHECK(sal["N"] == 78);
  REQUIRE(engage_model_explain(m, s, 2, 1, &out) == ENGAGE_OK);
  CHECK(take(out)["frames"].size() == 16);
  CHECK(engage_model_explain(m, s, 9, 0, &out) == ENGAGE_ERR_OUT_OF_RANGE);

  engage_sequence_free(s);
  engage_model_free(m);
}

TEST_CASE("ordinal training on a base checkpoint") {
  const auto& t = trained();
  auto cfg = json::parse(small_config(t.synth["manifest"].get<std::string>(), t.dir / "run"));
  cfg["model"]["head_mode"] = "binary_heads";
  char* out = nullptr;
  REQUIRE(engage_train_ordinal(cfg.dump().c_str(), t.summary["checkpoint"].get<std::string>().c_str(), &out) ==
          ENGAGE_OK);
  const auto sum = take(out);
  CHECK(sum["checkpoint"].get<std::string>().find("ordinal_best.stgc") != std::string::npos);

  engage_model* m = nullptr;
  REQUIRE(engage_model_load(sum["checkpoint"].get<std::string>().c_str(), &m) == ENGAGE_OK);
  engage_sequence* s = nullptr;
  REQUIRE(engage_sequence_read((t.dir / "data" / "synth_1.flmk").c_str(), &s) == ENGAGE_OK);
  REQUIRE(engage_model_infer(m, s, &out) == ENGAGE_OK);
  const auto inf = take(out);
  CHECK(inf["head_mode"] == "binary_heads");
  double total = 0.0;
  for (double p : inf["probabilities"]) total += p;
  CHECK(std::abs(total - 1.0) < 1e-9);
  engage_sequence_free(s);
  engage_model_free(m);

  cfg["model"]["channels"] = {4, 16};
  CHECK(engage_train_ordinal(cfg.dump().c_str(), t.summary["checkpoint"].get<std::string>().c_str(), &out) ==
        ENGAGE_ERR_FINGERPRINT);
}

TEST_CASE("load errors") {
  const auto dir = fresh("load");
  engage_model* m = nullptr;
  CHECK(engage_model_load((dir / "none.stgc").c_str(), &m) == ENGAGE_ERR_IO);
  {
    std::ofstream f(dir / "junk.stgc", std::ios::binary);
    f << "STGC";
  }
  CHECK(engage_model_load((dir / "junk.stgc").c_str(), &m) == ENGAGE_ERR_TRUNCATED);
  CHECK(engage_model_load(nullptr, &m) == ENGAGE_ERR_INVALID_ARGUMENT);
  CHECK(engage_model_load((dir / "junk.stgc").c_str(), nullptr) == ENGAGE_ERR_INVALID_ARGUMENT);
  char* out = nullptr;
  CHECK(engage_train("{}", &out) == ENGAGE_ERR_CONFIG);
}

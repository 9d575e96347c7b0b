#include <functional>

#include "core/config.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace engage;

namespace {

std::string message_of(const std::function<void()>& f, ErrorCode expected) {
  try {
    f();
  } catch (const Error& e) {
    CHECK(e.code() == expected);
    return e.what();
  }
  FAIL("expected an error");
  return {};
}

}  // namespace

TEST_CASE("defaults round trip through canonical JSON") {
  const RunConfig cfg;
  const auto back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  const auto j = nlohmann::json::parse(cfg.to_json());
  CHECK(j.at("train").at("epochs").get<int>() == 300);
  CHECK(j.at("train").at("batch_size").get<int>() == 16);
  CHECK(j.at("train").at("base_lr").get<double>() == 0.001);
  CHECK(j.at("model").at("channels") == nlohmann::json::array({64, 128, 256}));
  CHECK(j.at("model").at("temporal_kernel").get<int>() == 9);
}

TEST_CASE("every unknown key is listed") {
  const auto msg = message_of(
      [] { RunConfig::from_json(R"({"train":{"epochz":3,"lr":1},"extra":{}})"); },
      ErrorCode::kConfig);
  CHECK(msg.find("train.epochz") != std::string::npos);
  CHECK(msg.find("train.lr") != std::string::npos);
  CHECK(msg.find("extra") != std::string::npos);
}

TEST_CASE("wrong types and invalid values are reported by name") {
  const auto msg = message_of([] { RunConfig::from_json(R"({"train":{"epochs":"many"}})"); },
                              ErrorCode::kConfig);
  CHECK(msg.find("train.epochs") != std::string::npos);

  const auto v = message_of(
      [] { RunConfig::from_json(R"({"model":{"temporal_kernel":4},"train":{"batch_size":0}})"); },
      ErrorCode::kConfig);
  CHECK(v.find("temporal_kernel") != std::string::npos);
  CHECK(v.find("batch_size") != std::string::npos);
}

TEST_CASE("dotted overrides parse JSON literals") {
  RunConfig cfg;
  cfg.set("train.epochs", "12");
  cfg.set("model.channels", "[8,16,32]");
  cfg.set("model.head_mode", "binary_heads");
  cfg.set("data.manifest", "data/m.jsonl");
  CHECK(cfg.train.epochs == 12);
  CHECK(cfg.model.channels == std::vector<std::size_t>{8, 16, 32});
  CHECK(cfg.model.head_mode == HeadMode::kBinaryHeads);
  CHECK(cfg.data.manifest == "data/m.jsonl");
  CHECK_THROWS_AS(cfg.set("train.nope", "1"), Error);
  CHECK(cfg.arch().layers.size() == 3);
  CHECK(cfg.arch().layers[2].c_out == 32);
  CHECK(cfg.manifest_path("/base") == std::filesystem::path("/base/data/m.jsonl"));
}

TEST_CASE("preprocess settings carry over") {
  auto cfg = RunConfig::from_json(R"({"data":{"frame_stride":2,"drop_z":true,"target_T":64}})");
  const auto p = cfg.preprocess();
  CHECK(p.frame_stride == 2);
  CHECK(p.drop_z);
  CHECK(p.target_frames == 64u);
}

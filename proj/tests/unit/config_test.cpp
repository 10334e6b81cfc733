#include <gtest/gtest.h>

#include <filesystem>

#include "rtsrts/error.hpp"
#include "rtsrts/rtsv_io.hpp"
#include "rtsrts/run_config.hpp"

using namespace rtsrts;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, PresetsValidate) {
  const auto desk = preset("desk");
  EXPECT_NO_THROW(validate(desk));
  EXPECT_EQ(desk.network.input_size, 32);
  EXPECT_EQ(desk.dataset.n_samples, 120);
  const auto paper = preset("paper");
  EXPECT_NO_THROW(validate(paper));
  EXPECT_EQ(paper.dataset.n_samples, 1080);
  EXPECT_EQ(paper.network.input_size, 128);
  EXPECT_EQ(paper.training.epochs, 100);
  EXPECT_EQ(paper.training.decay_start, 50);
  EXPECT_EQ(paper.training.lr0, 2e-3);
  EXPECT_EQ(paper.training.beta1, 0.5);
  EXPECT_EQ(paper.training.beta2, 0.99);
  EXPECT_THROW(preset("huge"), ConfigError);
}

TEST(RunConfig, EmptyObjectIsDeskPreset) {
  EXPECT_EQ(resolved_json(parse_run_config("{}")), resolved_json(preset("desk")));
}

TEST(RunConfig, UnknownKeysRejectedWithPath) {
  EXPECT_NE(config_error(R"({"network": {"base_chanels": 8}})").find("network.base_chanels"), std::string::npos);
  EXPECT_NE(config_error(R"({"colour": 1})").find("'colour'"), std::string::npos);
  EXPECT_NE(config_error(R"({"training": {"epochs": "ten"}})").find("training.epochs"), std::string::npos);
  EXPECT_NE(config_error("{not json").find("JSON"), std::string::npos);
}

TEST(RunConfig, OverridesAndSeedDerivation) {
  const auto c = parse_run_config(
      R"({"seed": 42, "dataset": {"input_size": 64, "output_size": 64}, "network": {"enable_aec": false},
          "training": {"epochs": 10, "decay_start": 4}, "eval": {"noise_sigmas": [0, 0.1]}})");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.network.input_size, 64);
  EXPECT_FALSE(c.network.enable_aec);
  EXPECT_EQ(c.dataset.seed, 42u);
  EXPECT_NE(c.training.seed, c.dataset.seed);
  EXPECT_EQ(c.noise_sigmas, (std::vector<double>{0.0, 0.1}));
}

TEST(RunConfig, SemanticErrors) {
  EXPECT_FALSE(config_error(R"({"training": {"epochs": 10, "decay_start": 10}})").empty());
  EXPECT_FALSE(config_error(R"({"dataset": {"input_size": 32, "output_size": 64}})").empty());
  EXPECT_FALSE(config_error(R"({"eval": {"noise_sigmas": [-0.1]}})").empty());
  EXPECT_FALSE(config_error(R"({"eval": {"repetitions": 1}})").empty());
  EXPECT_FALSE(config_error(R"({"network": {"bottleneck": "tile"}})").empty());
  EXPECT_FALSE(config_error(R"({"dataset": {"input_size": 48, "output_size": 48}})").empty());
}

TEST(RunConfig, ResolvedJsonRoundTrips) {
  auto c = parse_run_config(R"({"scale": "paper", "seed": 9, "network": {"attention_residual_init": 0.1,
                                 "bottleneck": "replicate"}, "training": {"alpha2": 0.5}})");
  const auto text = resolved_json(c);
  const auto back = parse_run_config(text);
  EXPECT_EQ(resolved_json(back), text);
  EXPECT_EQ(back.network, c.network);
  EXPECT_EQ(dataset_hash(back), dataset_hash(c));
}

TEST(RunConfig, DatasetHashTracksDataFieldsOnly) {
  const auto a = preset("desk");
  auto b = a;
  b.training.epochs = 5;
  b.training.decay_start = 2;
  b.network.enable_ure = false;
  EXPECT_EQ(dataset_hash(a), dataset_hash(b));
  auto c = a;
  c.dataset.n_samples = 121;
  EXPECT_NE(dataset_hash(a), dataset_hash(c));
  auto d = a;
  d.seed = 5;
  finalize(d);
  EXPECT_NE(dataset_hash(a), dataset_hash(d));
}

TEST(RunConfig, LoadPrefixesPath) {
  const auto p = std::filesystem::temp_directory_path() / "rtsrts_bad_config.json";
  io::write_text(p, R"({"phantom": {"colour": 1}})");
  try {
    load_run_config(p);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rtsrts_bad_config.json"), std::string::npos) << msg;
    EXPECT_NE(msg.find("phantom.colour"), std::string::npos) << msg;
  }
}

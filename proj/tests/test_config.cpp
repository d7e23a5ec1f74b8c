#include <gtest/gtest.h>

#include <fstream>

#include "ssgan/config.hpp"
#include "test_support.hpp"

namespace ssgan {
namespace {

TEST(Config, DefaultsMatchTheDeskScaleProtocol) {
  const SsGANConfig c;
  EXPECT_DOUBLE_EQ(c.adam.lr, 2e-4);
  EXPECT_EQ(c.batch_size, 64);
  EXPECT_EQ(c.total_steps, 20000);
  EXPECT_EQ(c.eval.interval, 1000);
  EXPECT_EQ(c.eval.fid_samples, 5000);
  EXPECT_EQ(c.arch.image_size, 32);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, JsonRoundTrip) {
  SsGANConfig c;
  c.variant = Variant::SsGanSbn;
  c.weights.alpha = 0.5;
  c.adam.beta1 = 0.5;
  c.seed = 42;
  c.dataset.name = "shapes";
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, PartialJsonKeepsDefaults) {
  const auto c = config_from_json(nlohmann::json{{"weights", {{"alpha", 1.0}}}});
  EXPECT_DOUBLE_EQ(c.weights.alpha, 1.0);
  EXPECT_DOUBLE_EQ(c.weights.beta, 1.0);
  EXPECT_EQ(c.batch_size, 64);
}

TEST(Config, UnknownKeysAreRejectedWithTheirPath) {
  try {
    config_from_json(nlohmann::json{{"weights", {{"gamma", 1.0}}}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("weights.gamma"), std::string::npos);
  }
  EXPECT_THROW(config_from_json(nlohmann::json{{"learning_rate", 1}}), ConfigError);
}

TEST(Config, WrongTypesAndValuesAreRejected) {
  EXPECT_THROW(config_from_json(nlohmann::json{{"batch_size", "many"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"variant", "bigan"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"disc_iters", 0}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"batch_size", 30}}), ConfigError);
  EXPECT_NO_THROW(config_from_json(nlohmann::json{{"batch_size", 30}, {"variant", "sn_gan"}}));
  EXPECT_THROW(config_from_json(nlohmann::json{{"weights", {{"alpha", -1}}}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"regularizer", "gradient_penalty"}}), ConfigError);
}

TEST(Config, OverridesParseJsonOrFallBackToString) {
  const SsGANConfig base;
  const auto c = with_overrides(base, {"weights.alpha=0.5", "variant=sn_gan", "dataset.name=\"shapes\"", "seed=7"});
  EXPECT_DOUBLE_EQ(c.weights.alpha, 0.5);
  EXPECT_EQ(c.variant, Variant::SnGan);
  EXPECT_EQ(c.dataset.name, "shapes");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(to_json(c)["weights"]["alpha"], 0.5);
}

TEST(Config, OverrideErrorsNameTheKey) {
  const SsGANConfig base;
  EXPECT_THROW(with_overrides(base, {"weights.alfa=0.5"}), ConfigError);
  EXPECT_THROW(with_overrides(base, {"weights=1"}), ConfigError);
  EXPECT_THROW(with_overrides(base, {"noequals"}), ConfigError);
}

TEST(Config, HashIgnoresPathsButNotHyperparameters) {
  SsGANConfig a, b;
  b.paths.run_dir = "/elsewhere";
  b.paths.data_root = "/data";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.weights.alpha = 0.5;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, LoadsFromFile) {
  testing::TempDir dir;
  {
    std::ofstream out(dir / "run.json");
    out << R"({"variant": "ssgan_sbn", "total_steps": 10})";
  }
  const auto c = load_config(dir / "run.json");
  EXPECT_EQ(c.variant, Variant::SsGanSbn);
  EXPECT_EQ(c.total_steps, 10);
  {
    std::ofstream out(dir / "bad.json");
    out << "{not json";
  }
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
}

TEST(Config, ModelConfigCarriesVariantArchAndSeed) {
  SsGANConfig c;
  c.variant = Variant::PcGan;
  c.seed = 9;
  c.arch.d_width = 32;
  const auto m = c.model_config(true);
  EXPECT_EQ(m.variant, Variant::PcGan);
  EXPECT_EQ(m.seed, 9u);
  EXPECT_EQ(m.arch.d_width, 32);
  EXPECT_TRUE(m.labeled_dataset);
}

}  // namespace
}  // namespace ssgan

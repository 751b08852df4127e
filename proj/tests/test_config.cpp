#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "tmepsr/config.hpp"
#include "tmepsr/errors.hpp"

using namespace tmepsr;

TEST(Config, Defaults) {
  const ExperimentConfig c;
  EXPECT_EQ(c.alpha, 0.9);
  EXPECT_EQ(c.beta, 0.1);
  EXPECT_EQ(c.d, 50u);
  EXPECT_EQ(c.H, 2u);
  EXPECT_EQ(c.learning_rate, 1e-3);
  EXPECT_EQ(c.adam_beta1, 0.9);
  EXPECT_EQ(c.adam_beta2, 0.999);
  EXPECT_EQ(c.adam_eps, 1e-8);
  EXPECT_EQ(c.eval_k, 10u);
  EXPECT_EQ(c.time_strategy, TimeStrategy::gated);
  EXPECT_EQ(c.mi_mode, MiMode::dynamic_dual);
  EXPECT_FALSE(c.mask_seen);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, SetParsesTypedValues) {
  ExperimentConfig c;
  c.set("alpha", "0.25");
  c.set("d", "64");
  c.set("H", "4");
  c.set("time_strategy", "adj_only");
  c.set("mi_mode", "\"fixed\"");
  c.set("multi_interest", "false");
  c.set("seed", "123456789012");
  EXPECT_EQ(c.alpha, 0.25);
  EXPECT_EQ(c.d, 64u);
  EXPECT_EQ(c.H, 4u);
  EXPECT_EQ(c.time_strategy, TimeStrategy::adj_only);
  EXPECT_EQ(c.mi_mode, MiMode::fixed);
  EXPECT_FALSE(c.multi_interest);
  EXPECT_EQ(c.seed, 123456789012u);
}

TEST(Config, UnknownKeyListsValidKeys) {
  ExperimentConfig c;
  try {
    c.set("gamma", "1");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("gamma"), std::string::npos);
    for (const auto& k : ExperimentConfig::keys()) EXPECT_NE(msg.find(k), std::string::npos) << k;
  }
}

TEST(Config, BadValuesRejected) {
  ExperimentConfig c;
  EXPECT_THROW(c.set("d", "abc"), ConfigError);
  EXPECT_THROW(c.set("alpha", "0.5x"), ConfigError);
  EXPECT_THROW(c.set("time_aware", "maybe"), ConfigError);
  EXPECT_THROW(c.set("lru_mode", "fast"), ConfigError);
  ExperimentConfig bad;
  bad.H = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.alpha = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.beta = -0.1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Config, EffectiveFoldsToggles) {
  ExperimentConfig c;
  c.time_aware = false;
  c.multi_interest = false;
  c.explanation_personalization = false;
  const auto e = c.effective();
  EXPECT_EQ(e.time_strategy, TimeStrategy::disabled);
  EXPECT_EQ(e.H, 1u);
  EXPECT_EQ(e.mi_mode, MiMode::disabled);
  const auto same = ExperimentConfig{}.effective();
  EXPECT_EQ(same.H, 2u);
  EXPECT_EQ(same.time_strategy, TimeStrategy::gated);
}

TEST(Config, TextRoundTripAndStableHash) {
  ExperimentConfig c;
  c.set("beta", "0.3");
  c.set("lru_mode", "sequential");
  c.set("mi_candidates", "sampled");
  const auto back = ExperimentConfig::parse(c.to_text());
  EXPECT_EQ(back.to_map(), c.to_map());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(c.hash().size(), 16u);
  EXPECT_NE(c.hash(), ExperimentConfig{}.hash());
  EXPECT_EQ(ExperimentConfig{}.hash(), ExperimentConfig{}.hash());
}

TEST(Config, ParseIgnoresCommentsAndSections) {
  const auto c = ExperimentConfig::parse("# comment\n[model]\nd = 8   # inline\nH = 2\n\nalpha = 0.5\n");
  EXPECT_EQ(c.d, 8u);
  EXPECT_EQ(c.alpha, 0.5);
  EXPECT_THROW(ExperimentConfig::parse("no_equals_sign\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("nonsense = 1\n"), ConfigError);
}

TEST(Config, LoadFileAndMissingFile) {
  const auto path = std::filesystem::temp_directory_path() / "tmepsr_config_test.toml";
  {
    std::ofstream out(path);
    out << "epochs = 3\nlearning_rate = 0.01\n";
  }
  const auto c = ExperimentConfig::load(path);
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.learning_rate, 0.01);
  std::filesystem::remove(path);
  EXPECT_ANY_THROW(ExperimentConfig::load("/nonexistent/config.toml"));
}

TEST(Hash, Fnv1aKnownValues) {
  // Published FNV-1a 64-bit test vectors.
  EXPECT_EQ(content_hash(""), "cbf29ce484222325");
  EXPECT_EQ(content_hash("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(content_hash("foobar"), "85944171f73967e8");
}

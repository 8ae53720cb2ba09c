#include <gtest/gtest.h>

#include "edo/config.hpp"

namespace edo {
namespace {

std::string error_text(const std::string& json) {
  try {
    config_from_json_text(json);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
    return e.what();
  }
  return "";
}

TEST(Config, DefaultsCarryTrainingDefaults) {
  const ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.train_mode(), TrainMode::kEdGrpo);
  EXPECT_DOUBLE_EQ(cfg.alpha, 1e-3);
  EXPECT_EQ(cfg.iterations, 3u);
  EXPECT_EQ(cfg.rollouts, 10u);
  EXPECT_EQ(cfg.sc_n, 10u);
  EXPECT_EQ(cfg.sc_repeats, 3u);
  EXPECT_EQ(cfg.epochs, 1u);
  EXPECT_EQ(cfg.sweep_alphas, (std::vector<double>{0.0, 1e-4, 1e-3, 1e-2, 1e-1}));
}

TEST(Config, TextRoundTripIsCanonical) {
  ExperimentConfig cfg;
  cfg.alpha = 0.0125;
  cfg.mode = "idpo";
  cfg.seed = 18446744073709551615ULL;
  cfg.strategies = {"greedy", "search"};
  const std::string text = config_to_json_text(cfg);
  const auto back = config_from_json_text(text);
  EXPECT_EQ(config_to_json_text(back), text);
  EXPECT_EQ(back.seed, cfg.seed);
  EXPECT_EQ(back.strategies, cfg.strategies);
}

TEST(Config, PartialFilesKeepDefaults) {
  const auto cfg = config_from_json_text(R"({"alpha": 0.01, "seed": 4})");
  EXPECT_DOUBLE_EQ(cfg.alpha, 0.01);
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_DOUBLE_EQ(cfg.beta, ExperimentConfig{}.beta);
}

TEST(Config, ErrorsNameTheKey) {
  EXPECT_NE(error_text(R"({"alpah": 0.1})").find("'alpah'"), std::string::npos);
  EXPECT_NE(error_text(R"({"alpha": -0.1})").find("'alpha'"), std::string::npos);
  EXPECT_NE(error_text(R"({"beta": "big"})").find("'beta'"), std::string::npos);
  EXPECT_NE(error_text(R"({"rollouts": -3})").find("'rollouts'"), std::string::npos);
  EXPECT_NE(error_text(R"({"strategies": ["greedy", "beam"]})").find("strategies[1]"), std::string::npos);
  EXPECT_NE(error_text(R"({"mode": "ppo"})").find("ppo"), std::string::npos);
  EXPECT_NE(error_text(R"({"advantage": "raw"})").find("'advantage'"), std::string::npos);
  EXPECT_FALSE(error_text("[1, 2]").empty());
  EXPECT_FALSE(error_text("{not json").empty());
}

TEST(Config, ModesAndFamilies) {
  EXPECT_TRUE(is_grpo(parse_mode("grpo")));
  EXPECT_TRUE(is_exploration_driven(parse_mode("ed-idpo")));
  EXPECT_FALSE(is_exploration_driven(parse_mode("idpo")));
  EXPECT_STREQ(to_string(TrainMode::kEdGrpo), "ed-grpo");
  EXPECT_EQ(ExperimentConfig{}.advantage_mode(), AdvantageMode::kStandardized);
}

}  // namespace
}  // namespace edo

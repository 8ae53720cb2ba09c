#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "edo/rmodel.hpp"
#include "test_support.hpp"

namespace edo {
namespace {

using testing::small_map;

RewardModel random_rm(const FeatureMap& fm, std::uint64_t seed, double scale = 0.3) {
  RewardModel rm(fm);
  RngStream rng(seed);
  for (double& w : rm.weights) w = scale * rng.normal();
  return rm;
}

TEST(PooledFeatures, EmptyResponseIsZeroAndEntriesBounded) {
  const auto fm = small_map(8, 64);
  EXPECT_TRUE(pooled_features(TokenSeq{1, 2}, TokenSeq{}, fm).empty());
  const auto v = pooled_features(TokenSeq{1, 2}, TokenSeq{3, 3, 3, 4}, fm);
  double total = 0.0;
  for (double x : v.value) {
    EXPECT_GT(x, 0.0);
    EXPECT_LE(x, 1.0);
    total += x;
  }
  EXPECT_LE(total, static_cast<double>(fm.context_window) + 1e-12);
}

TEST(PooledFeatures, MeanOfStatesAfterEachToken) {
  const auto fm = small_map(8, 64);
  const TokenSeq prompt = {1}, response = {2, 5};
  std::vector<double> oracle(fm.dim, 0.0);
  for (auto i : featurize(TokenSeq{1, 2}, fm)) oracle[i] += 0.5;
  for (auto i : featurize(TokenSeq{1, 2, 5}, fm)) oracle[i] += 0.5;
  EXPECT_LT(testing::max_abs_diff(pooled_features(prompt, response, fm).to_dense(fm.dim), oracle), 1e-15);
}

TEST(RmScore, ZeroWeightsAndLinearity) {
  const auto fm = small_map(8, 64);
  RewardModel zero(fm);
  EXPECT_EQ(rm_score(zero, TokenSeq{1}, TokenSeq{2, 3}), 0.0);
  auto rm = random_rm(fm, 1);
  const double s = rm_score(rm, TokenSeq{1}, TokenSeq{2, 3});
  for (double& w : rm.weights) w *= -2.5;
  EXPECT_NEAR(rm_score(rm, TokenSeq{1}, TokenSeq{2, 3}), -2.5 * s, 1e-12);
}

TEST(NceLoss, DegenerateCandidateSets) {
  const auto fm = small_map(8, 64);
  auto rm = random_rm(fm, 2);
  EXPECT_NEAR(nce_loss(rm, TokenSeq{1}, TokenSeq{2, 3}, {}, 0.0).value, 0.0, 1e-15);
  const std::vector<TokenSeq> same = {{2, 3}};
  EXPECT_NEAR(nce_loss(rm, TokenSeq{1}, TokenSeq{2, 3}, same, 0.0).value, std::log(2.0), 1e-12);
}

TEST(NceLoss, GradientMatchesCentralDifferences) {
  const auto fm = small_map(8, 16);
  RngStream rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto rm = random_rm(fm, 40 + trial, 0.8);
    const auto prompt = testing::random_tokens(rng, 2, 8);
    const auto pos = testing::random_tokens(rng, 1 + rng.index(6), 8);
    std::vector<TokenSeq> negs;
    for (int j = 0; j < 4; ++j) negs.push_back(testing::random_tokens(rng, 1 + rng.index(6), 8));
    const auto analytic = nce_loss(rm, prompt, pos, negs, 0.01);
    std::vector<double> numeric(fm.dim);
    for (std::size_t i = 0; i < fm.dim; ++i) {
      const double saved = rm.weights[i];
      rm.weights[i] = saved + 1e-5;
      const double up = nce_loss(rm, prompt, pos, negs, 0.01).value;
      rm.weights[i] = saved - 1e-5;
      const double down = nce_loss(rm, prompt, pos, negs, 0.01).value;
      rm.weights[i] = saved;
      numeric[i] = (up - down) / 2e-5;
    }
    EXPECT_LT(testing::rel_error(analytic.grad, numeric), 1e-4);
  }
}

TEST(NceLoss, NonNegativeAndDecreasingInPositiveScore) {
  const auto fm = small_map(8, 4096);
  RewardModel rm(fm);
  const TokenSeq prompt = {1}, pos = {6, 6};
  const std::vector<TokenSeq> negs = {{2, 3}, {4}};
  // Feature of "6 in slot 0" is only active for the positive.
  const auto phi6 = fm.slot_index(0, 6);
  double last = std::numeric_limits<double>::infinity();
  for (double w = -2.0; w <= 6.0; w += 0.5) {
    rm.weights[phi6] = w;
    const double v = nce_loss(rm, prompt, pos, negs, 0.0).value;
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, last);
    last = v;
  }
}

struct ToySet {
  FeatureMap fm = small_map(10, 256);
  std::vector<RmExample> data;
  ToySet() {
    // Token 9 appears in positives only.
    RngStream rng(11);
    for (int p = 0; p < 12; ++p) {
      RmExample ex;
      ex.prompt = testing::random_tokens(rng, 3, 8);
      ex.positive = testing::random_tokens(rng, 3, 8);
      ex.positive.insert(ex.positive.begin() + static_cast<std::ptrdiff_t>(rng.index(4)), 9);
      for (int j = 0; j < 4; ++j) ex.negatives.push_back(testing::random_tokens(rng, 1 + rng.index(5), 8));
      data.push_back(std::move(ex));
    }
  }
};

TEST(TrainRm, SeparableToySetIsRankedPerfectly) {
  ToySet toy;
  RewardModel rm(toy.fm);
  RmTrainOptions opts;
  opts.seed = 4;
  opts.epochs = 200;
  train_rm(rm, toy.data, opts);
  for (const auto& ex : toy.data) {
    const double pos = rm_score(rm, ex.prompt, ex.positive);
    for (const auto& n : ex.negatives) EXPECT_GT(pos, rm_score(rm, ex.prompt, n));
  }
}

TEST(TrainRm, DeterministicAndRegularizationBoundsNorm) {
  ToySet toy;
  RmTrainOptions opts;
  opts.seed = 8;
  RewardModel a(toy.fm), b(toy.fm), free(toy.fm);
  train_rm(a, toy.data, opts);
  train_rm(b, toy.data, opts);
  EXPECT_EQ(std::memcmp(a.weights.data(), b.weights.data(), a.weights.size() * sizeof(double)), 0);
  opts.reg = 0.0;
  train_rm(free, toy.data, opts);
  auto norm = [](const RewardModel& rm) {
    double s = 0.0;
    for (double w : rm.weights) s += w * w;
    return std::sqrt(s);
  };
  EXPECT_LT(norm(a), norm(free));
}

TEST(TrainRm, EmptyDatasetRejected) {
  RewardModel rm(small_map(4, 8));
  EXPECT_THROW(train_rm(rm, {}, {}), Error);
}

TEST(RewardModelFile, RoundTrip) {
  const auto rm = random_rm(small_map(6, 40, 2), 13, 2.0);
  std::stringstream buf;
  save_reward_model(rm, buf);
  const auto back = load_reward_model(buf);
  EXPECT_EQ(back.feature_map, rm.feature_map);
  EXPECT_EQ(std::memcmp(back.weights.data(), rm.weights.data(), rm.weights.size() * sizeof(double)), 0);
}

}  // namespace
}  // namespace edo

#include <gtest/gtest.h>

#include <cmath>

#include "edo/metrics.hpp"
#include "edo/trainer.hpp"
#include "edo/ttc.hpp"
#include "test_support.hpp"

namespace edo {
namespace {

using Answers = std::vector<std::optional<TokenSeq>>;

TEST(MajorityVote, PluralityAndLexicographicTies) {
  EXPECT_EQ(majority_vote(Answers{TokenSeq{3}, TokenSeq{3}, TokenSeq{5}}).answer, (TokenSeq{3}));
  EXPECT_EQ(majority_vote(Answers{TokenSeq{5}, TokenSeq{3}}).answer, (TokenSeq{3}));
  const auto v = majority_vote(Answers{TokenSeq{5}, TokenSeq{3}});
  EXPECT_EQ(v.index, 1u);
}

TEST(MajorityVote, NullBucketOnlyWinsWhenEverythingIsNull) {
  const auto v = majority_vote(Answers{std::nullopt, std::nullopt, std::nullopt, TokenSeq{2}});
  EXPECT_EQ(v.answer, (TokenSeq{2}));
  EXPECT_EQ(v.index, 3u);
  const auto all_null = majority_vote(Answers{std::nullopt, std::nullopt});
  EXPECT_FALSE(all_null.answer.has_value());
  EXPECT_EQ(all_null.index, 0u);
}

TEST(MajorityVote, DuplicatingCandidatesKeepsWinner) {
  RngStream rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    Answers a;
    for (std::size_t i = 0, n = 1 + rng.index(9); i < n; ++i) {
      if (rng.index(4) == 0) {
        a.push_back(std::nullopt);
      } else {
        a.push_back(TokenSeq{static_cast<Token>(rng.index(4))});
      }
    }
    Answers doubled = a;
    doubled.insert(doubled.end(), a.begin(), a.end());
    EXPECT_EQ(majority_vote(a).answer, majority_vote(doubled).answer);
  }
}

TEST(ArgmaxFirst, MaxAndLowestIndexTies) {
  EXPECT_EQ(argmax_first(std::vector<double>{0.1, 0.9, 0.3}), 1u);
  EXPECT_EQ(argmax_first(std::vector<double>{0.4, 0.4, 0.4}), 0u);
}

TEST(ArgmaxFirst, InvariantUnderIncreasingTransforms) {
  RngStream rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(1 + rng.index(12)), t(s.size());
    for (auto& x : s) x = rng.normal();
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3.0 * s[i]) + 7.0;
    EXPECT_EQ(argmax_first(s), argmax_first(t));
  }
}

class DecodeFixture : public ::testing::Test {
 protected:
  Task task = [] {
    TaskSpec s;
    s.modulus = 3;
    s.min_chain = 1;
    s.max_chain = 1;
    s.n_train = 10;
    s.n_eval = 8;
    return make_task(s);
  }();
  SoftmaxPolicy policy = testing::random_policy(task.feature_map(3, 256), 5, 1.0);
  SampleOptions opts = rollout_options(task, 6, 1.0);
};

TEST_F(DecodeFixture, GreedyIsPoolOfOneAndMatchesGreedySampling) {
  const auto& p = task.eval()[0];
  const auto a = greedy_decode(policy, task, p, opts);
  const auto b = greedy_decode(policy, task, p, opts);
  EXPECT_EQ(a.pool_size(), 1u);
  EXPECT_EQ(a.chosen(), b.chosen());
  SampleOptions g = opts;
  g.greedy = true;
  RngStream rng(0);
  EXPECT_EQ(a.chosen().tokens, sample_response(policy, p.id, p.tokens, g, rng).tokens);
}

TEST_F(DecodeFixture, SelfConsistencyPoolProvenanceAndChoice) {
  const auto& p = task.eval()[1];
  RngStream r1(3), r2(3);
  const auto sc = self_consistency(policy, task, p, 10, opts, r1);
  const auto pool = sample_pool(policy, task, p, 10, opts, r2);
  ASSERT_EQ(sc.pool_size(), 10u);
  Answers answers;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    EXPECT_EQ(sc.pool[i].response, pool[i].response);
    answers.push_back(pool[i].response.answer);
  }
  const auto vote = majority_vote(answers);
  EXPECT_EQ(sc.winning_answer, vote.answer);
  EXPECT_EQ(sc.index, vote.index);
  EXPECT_EQ(sc.chosen().answer, vote.answer);
}

TEST_F(DecodeFixture, BestOfNPicksExhaustiveMaximum) {
  RewardModel rm(policy.feature_map());
  RngStream w(8);
  for (auto& x : rm.weights) x = w.normal();
  for (const auto& p : task.eval()) {
    RngStream rng(p.id);
    const auto bon = best_of_n(policy, rm, task, p, 10, opts, rng);
    double best = -1e300;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < bon.pool.size(); ++i) {
      const double s = rm_score(rm, p.tokens, bon.pool[i].response.tokens);
      EXPECT_EQ(*bon.pool[i].score, s);
      if (s > best) {
        best = s;
        best_i = i;
      }
    }
    EXPECT_EQ(bon.index, best_i);
    EXPECT_EQ(*bon.pool[bon.index].score, best);
  }
}

// Probability that one uniform-policy rollout is correct, by enumerating
// every token sequence the sampler can emit.
double uniform_chance(const Task& task, const Prompt& p, std::size_t max_len) {
  const std::size_t V = task.vocab().size();
  double total = 0.0;
  std::vector<TokenSeq> layer = {{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<TokenSeq> next;
    for (const auto& prefix : layer) {
      for (std::size_t a = 0; a < V; ++a) {
        TokenSeq s = prefix;
        s.push_back(static_cast<Token>(a));
        const bool stop = s.back() == task.vocab().end() || len == max_len;
        if (stop) {
          if (task.verify(s, p)) total += std::pow(1.0 / static_cast<double>(V), static_cast<double>(len));
        } else {
          next.push_back(std::move(s));
        }
      }
    }
    layer = std::move(next);
  }
  return total;
}

TEST_F(DecodeFixture, UniformPolicyAccuracyMatchesEnumeratedChance) {
  SoftmaxPolicy uniform(task.feature_map(3, 64));
  SampleOptions o = rollout_options(task, 5, 1.0);
  double chance = 0.0;
  for (const auto& p : task.eval()) chance += uniform_chance(task, p, 5);
  chance /= static_cast<double>(task.eval().size());

  const std::size_t draws = 4000;
  double hits = 0.0;
  for (const auto& p : task.eval()) {
    RngStream rng(11, Stream::kEvalSc, static_cast<std::uint64_t>(p.id));
    for (std::size_t j = 0; j < draws; ++j) hits += task.verify(sample_response(uniform, p.id, p.tokens, o, rng).tokens, p);
  }
  const double n = static_cast<double>(draws * task.eval().size());
  const double rate = hits / n;
  EXPECT_NEAR(rate, chance, 4.0 * std::sqrt(chance * (1.0 - chance) / n));

  // Greedy on a uniform policy emits digit 0 forever and never reaches the marker.
  std::vector<DecodeResult> greedy;
  for (const auto& p : task.eval()) greedy.push_back(greedy_decode(uniform, task, p, o));
  EXPECT_EQ(accuracy(greedy, task.eval(), task), 0.0);
}

}  // namespace
}  // namespace edo

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "edo/trainer.hpp"

namespace edo {
namespace {

namespace fs = std::filesystem;

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.task_n_train = 12;
  c.task_n_eval = 6;
  c.feature_dim = 512;
  c.warmup_epochs = 2;
  c.minibatch_prompts = 4;
  c.sc_repeats = 1;
  c.rm_epochs = 5;
  c.iterations = 2;
  c.seed = 3;
  return c;
}

bool same_bytes(const ParamMatrix& a, const ParamMatrix& b) {
  return a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RolloutGroup group_with_rewards(std::vector<int> rewards, int id = 0) {
  RolloutGroup g;
  g.prompt_id = id;
  g.prompt = {1, 2};
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    Response r;
    r.prompt_id = id;
    r.tokens = {static_cast<Token>(i)};
    r.reward = rewards[i];
    g.responses.push_back(r);
  }
  return g;
}

TEST(CollectRollouts, ShapeRewardsAndDeterminism) {
  const auto cfg = small_config();
  const Task task = make_task(cfg.task_spec());
  auto state = init_state(task, cfg);
  const auto opts = rollout_options(task, cfg.max_len, 1.0);
  const auto a = collect_rollouts(state.policy, task, task.train(), 10, opts, cfg.seed, 1);
  const auto b = collect_rollouts(state.policy, task, task.train(), 10, opts, cfg.seed, 1);
  ASSERT_EQ(a.size(), task.train().size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].responses.size(), 10u);
    for (std::size_t j = 0; j < 10; ++j) {
      EXPECT_TRUE(a[i].responses[j].reward == 0 || a[i].responses[j].reward == 1);
      EXPECT_EQ(a[i].responses[j], b[i].responses[j]);
    }
  }
  // Streams are keyed by prompt id, not position.
  std::vector<Prompt> reversed(task.train().rbegin(), task.train().rend());
  const auto c = collect_rollouts(state.policy, task, reversed, 10, opts, cfg.seed, 1);
  EXPECT_EQ(c.front().responses, a.back().responses);
}

TEST(PreferencePairs, PartitionAndCyclingCap) {
  std::vector<RolloutGroup> groups = {group_with_rewards({1, 1, 0, 0}, 0)};
  auto pairs = collect_preference_pairs(groups, 2, 0, 1);
  ASSERT_EQ(pairs.size(), 2u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.chosen.reward, 1);
    EXPECT_EQ(p.rejected.reward, 0);
  }

  groups = {group_with_rewards({1, 1, 1}, 0)};
  EXPECT_TRUE(collect_preference_pairs(groups, 4, 0, 1).empty());

  groups = {group_with_rewards({1, 0}, 0)};
  EXPECT_EQ(collect_preference_pairs(groups, 5, 0, 1).size(), 1u);

  // lcm(2, 3) = 6 distinct pairs at most; all of them distinct.
  groups = {group_with_rewards({1, 0, 1, 0, 0}, 0)};
  pairs = collect_preference_pairs(groups, 10, 0, 1);
  ASSERT_EQ(pairs.size(), 6u);
  std::set<std::pair<TokenSeq, TokenSeq>> distinct;
  for (const auto& p : pairs) distinct.insert({p.chosen.tokens, p.rejected.tokens});
  EXPECT_EQ(distinct.size(), 6u);
}

TEST(TrainIteration, SnapshotDiscipline) {
  for (const char* mode : {"ed-idpo", "ed-grpo"}) {
    auto cfg = small_config();
    cfg.mode = mode;
    const Task task = make_task(cfg.task_spec());
    auto state = init_state(task, cfg);
    const SoftmaxPolicy pi0 = state.policy;
    EXPECT_TRUE(same_bytes(state.ref.weights(), pi0.weights()));
    for (std::size_t t = 1; t <= 3; ++t) {
      const SoftmaxPolicy before = state.policy;
      train_iteration(state, task, cfg, cfg.train_mode());
      EXPECT_TRUE(same_bytes(state.ref.weights(), pi0.weights())) << mode;
      EXPECT_TRUE(same_bytes(state.prev.weights(), before.weights())) << mode;
      EXPECT_EQ(state.iteration, t);
    }
    EXPECT_FALSE(same_bytes(state.policy.weights(), pi0.weights()));
  }
}

TEST(TrainIteration, AlphaZeroMatchesBaseModeBitwise) {
  for (auto [base, ed] : {std::pair{"idpo", "ed-idpo"}, std::pair{"grpo", "ed-grpo"}}) {
    auto cfg = small_config();
    cfg.alpha = 0.0;
    const Task task = make_task(cfg.task_spec());
    auto s1 = init_state(task, cfg), s2 = init_state(task, cfg);
    for (int t = 0; t < 2; ++t) {
      const auto l1 = train_iteration(s1, task, cfg, parse_mode(base));
      const auto l2 = train_iteration(s2, task, cfg, parse_mode(ed));
      EXPECT_EQ(std::memcmp(&l1.loss, &l2.loss, sizeof(double)), 0);
    }
    EXPECT_TRUE(same_bytes(s1.policy.weights(), s2.policy.weights())) << base;
  }
}

TEST(TrainIteration, StarvedIterationLeavesParametersUntouched) {
  auto cfg = small_config();
  cfg.warmup_epochs = 0;
  const Task task = make_task(cfg.task_spec());
  for (const char* mode : {"idpo", "grpo"}) {
    auto state = init_state(task, cfg);
    // Every rollout repeats digit 0 and never reaches the marker.
    for (std::size_t i = 0; i < state.policy.dim(); ++i) state.policy.weights()(0, i) = 50.0;
    const SoftmaxPolicy before = state.policy;
    const auto log = train_iteration(state, task, cfg, parse_mode(mode));
    EXPECT_TRUE(log.starved);
    EXPECT_EQ(log.steps, 0u);
    EXPECT_TRUE(std::isnan(log.loss));
    EXPECT_TRUE(same_bytes(state.policy.weights(), before.weights()));
  }
}

TEST(WarmStart, LowersDerivationLikelihoodLoss) {
  const auto cfg = small_config();
  const Task task = make_task(cfg.task_spec());
  SoftmaxPolicy p(task.feature_map(cfg.context_window, cfg.feature_dim));
  const double one = warm_start(p, task, 1, cfg.warmup_lr, cfg.minibatch_prompts, cfg.seed);
  const double more = warm_start(p, task, 5, cfg.warmup_lr, cfg.minibatch_prompts, cfg.seed);
  EXPECT_LT(more, one);
}

TEST(Evaluate, MissingRewardModelIsReported) {
  const auto cfg = small_config();
  const Task task = make_task(cfg.task_spec());
  const auto state = init_state(task, cfg);
  const std::vector<std::string> strategies = {"bon"};
  try {
    evaluate_policy(state.policy, nullptr, task, cfg, strategies);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingDependency);
  }
}

TEST(RunTraining, RerunIsByteIdentical) {
  auto cfg = small_config();
  cfg.strategies = {"greedy", "sc", "bon", "search"};
  cfg.search_iterations = 4;
  const fs::path root = fs::temp_directory_path() / "edo_trainer_determinism";
  fs::remove_all(root);
  const auto r1 = run_training(cfg, (root / "a").string());
  run_training(cfg, (root / "b").string());
  ASSERT_EQ(r1.records.size(), cfg.iterations + 1);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root / "a");
    EXPECT_EQ(slurp(entry.path()), slurp(root / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_GE(files, 7u);
  EXPECT_TRUE(fs::exists(root / "a" / "checkpoints" / "policy_iter_2.bin"));
  std::ifstream csv(root / "a" / "metrics.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header,
            "iteration,mode,loss,entropy,accuracy_greedy,accuracy_sc,accuracy_bon,distinct_4,pairs_emitted,groups_kept");
  fs::remove_all(root);
}

}  // namespace
}  // namespace edo

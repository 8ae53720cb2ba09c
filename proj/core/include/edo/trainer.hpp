#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edo/config.hpp"
#include "edo/losses.hpp"
#include "edo/metrics.hpp"
#include "edo/optimizer.hpp"
#include "edo/policy.hpp"
#include "edo/rmodel.hpp"
#include "edo/tasks.hpp"

namespace edo {

/// Sampling options for rollouts on a task: stop at END, cap at max_len.
SampleOptions rollout_options(const Task& task, std::size_t max_len, double temperature);

/// n scored responses per prompt. Response j of prompt p at iteration t draws
/// from the stream (seed, rollout, t, p.id, j), so results do not depend on
/// prompt order.
std::vector<RolloutGroup> collect_rollouts(const SoftmaxPolicy& policy, const Task& task,
                                           std::span<const Prompt> prompts, std::size_t n,
                                           const SampleOptions& options, std::uint64_t seed, std::size_t iteration);

/// Per prompt: winners (reward 1) and losers (reward 0) are shuffled under the
/// (seed, pairs, iteration, prompt id) stream and zipped cyclically, emitting
/// min(S, lcm(|W|, |L|)) distinct pairs. Prompts with an empty side emit none.
std::vector<PreferencePair> collect_preference_pairs(std::span<const RolloutGroup> groups, std::size_t s,
                                                     std::uint64_t seed, std::size_t iteration);

struct IterationLog {
  std::size_t iteration = 0;
  TrainMode mode = TrainMode::kEdGrpo;
  double loss = 0.0;        ///< mean over optimizer steps; NaN when starved
  std::size_t pairs_emitted = 0;
  std::size_t groups_kept = 0;
  std::size_t steps = 0;
  bool starved = false;     ///< no pairs and no informative groups: parameters untouched
};

struct IterationState {
  std::size_t iteration = 0;
  SoftmaxPolicy policy;
  SoftmaxPolicy ref;   ///< pi^0, frozen
  SoftmaxPolicy prev;  ///< pi^{t-1} (preference modes) or pi_old (group modes)
  Adam optimizer;
  std::vector<IterationLog> log;
};

/// Maximum likelihood on every canonical derivation of the train split.
/// Returns the final epoch's mean per-sequence negative log-likelihood.
double warm_start(SoftmaxPolicy& policy, const Task& task, std::size_t epochs, double learning_rate,
                  std::size_t minibatch_prompts, std::uint64_t seed);

/// Builds pi^0 (warm-started when configured) and freezes it as pi_ref.
IterationState init_state(const Task& task, const ExperimentConfig& cfg);

/// One round of rollouts and E optimizer epochs in the given mode. Non-finite
/// losses abort with kDivergedRun.
IterationLog train_iteration(IterationState& state, const Task& task, const ExperimentConfig& cfg, TrainMode mode);

/// Reward model trained once from pi^0: each train prompt contributes one
/// example per canonical derivation, with rm_negatives pi^0 samples each.
RewardModel train_reward_model(const SoftmaxPolicy& pi0, const Task& task, const ExperimentConfig& cfg);

struct EvalResult {
  MetricsRecord record;
  std::vector<TokenSeq> diversity_corpus;
};

/// Entropy, diversity, and the requested decoding strategies on the eval
/// split. Evaluation streams depend only on the seed, never on the iteration,
/// so policies are compared on common random numbers.
EvalResult evaluate_policy(const SoftmaxPolicy& policy, const RewardModel* rm, const Task& task,
                           const ExperimentConfig& cfg, std::span<const std::string> strategies);

struct RunResult {
  std::vector<MetricsRecord> records;  ///< iteration 0 (pi^0) through T
  std::vector<IterationLog> log;
  SoftmaxPolicy final_policy;
  std::optional<RewardModel> reward_model;
};

/// Full pipeline. When out_dir is non-empty it receives config.json,
/// checkpoints/policy_iter_<t>.bin, reward_model.bin, metrics.csv (per-iteration
/// training table), metrics_full.csv, and report.json.
RunResult run_training(const ExperimentConfig& cfg, const std::string& out_dir);

/// Per-iteration training table columns: iteration, mode, loss, entropy,
/// accuracy_greedy, accuracy_sc, accuracy_bon, distinct_4, pairs_emitted, groups_kept.
void write_training_csv(std::ostream& out, std::span<const MetricsRecord> records, std::span<const IterationLog> log);

struct SweepRow {
  double alpha = 0.0;
  MetricsRecord final_record;
};

/// One full train+eval per alpha value, everything else fixed.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, std::span<const double> alphas);

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

}  // namespace edo

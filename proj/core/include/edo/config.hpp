#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "edo/losses.hpp"
#include "edo/rmodel.hpp"
#include "edo/search.hpp"
#include "edo/tasks.hpp"
#include "edo/ttc.hpp"

namespace edo {

enum class TrainMode { kIdpo, kEdIdpo, kGrpo, kEdGrpo };

const char* to_string(TrainMode m);
/// "idpo", "ed-idpo", "grpo", "ed-grpo"; throws kInvalidConfig otherwise.
TrainMode parse_mode(const std::string& name);
bool is_grpo(TrainMode m) noexcept;
bool is_exploration_driven(TrainMode m) noexcept;

/// Every knob of a run. Serialized as one flat JSON object whose keys are the
/// member names below; unknown keys and type mismatches are rejected.
struct ExperimentConfig {
  // Task family.
  int task_modulus = 5;
  int task_min_chain = 1;
  int task_max_chain = 2;
  std::size_t task_n_train = 48;
  std::size_t task_n_eval = 32;

  // Policy features.
  std::size_t context_window = 3;
  std::size_t feature_dim = 4096;
  std::size_t max_len = 8;

  // Warm start: maximum likelihood on the train split's reference derivations.
  std::size_t warmup_epochs = 3;
  double warmup_lr = 0.05;

  // Objective.
  std::string mode = "ed-grpo";
  double alpha = 1e-3;
  double beta = 0.1;
  double eps_low = 0.2;
  double eps_high = 0.2;
  double sigma_floor = 1e-6;
  std::string advantage = "standardized";  ///< or "mean-only"

  // Loop.
  std::size_t iterations = 3;       ///< T
  std::size_t epochs = 1;           ///< E optimizer epochs per iteration
  std::size_t rollouts = 10;        ///< N responses per prompt (group size G)
  std::size_t pairs_per_prompt = 4; ///< S
  std::size_t minibatch_prompts = 8;
  double learning_rate = 1e-2;
  double temperature = 1.0;

  // Evaluation.
  std::vector<std::string> strategies = {"greedy", "sc", "bon"};
  double eval_temperature = 1.0;
  std::size_t sc_n = 10;
  std::size_t sc_repeats = 3;
  std::size_t bon_n = 10;
  std::size_t entropy_samples = 4;
  std::size_t diversity_samples = 10;

  // Reward model.
  std::size_t rm_negatives = 4;
  std::size_t rm_epochs = 30;
  double rm_lr = 5e-2;
  double rm_reg = 0.01;
  std::size_t rm_batch = 16;

  // Tree search.
  std::size_t search_beam = 4;
  std::size_t search_branching = 4;
  std::size_t search_iterations = 16;
  double search_lambda = 1.0;
  double search_noise_var = 0.25;
  double search_ridge = 1.0;

  // Sweep.
  std::vector<double> sweep_alphas = {0.0, 1e-4, 1e-3, 1e-2, 1e-1};

  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";

  TaskSpec task_spec() const;
  TrainMode train_mode() const { return parse_mode(mode); }
  AdvantageMode advantage_mode() const;
  ClipRange clip() const { return {eps_low, eps_high}; }
  RmTrainOptions rm_options() const;
  SearchOptions search_options() const;

  /// Throws kInvalidConfig naming the offending key.
  void validate() const;
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Canonical rendering: every key in declaration order, two-space indent.
std::string config_to_json_text(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace edo

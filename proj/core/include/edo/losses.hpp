#pragma once

#include <functional>
#include <span>
#include <vector>

#include "edo/common.hpp"
#include "edo/policy.hpp"

namespace edo {

struct PreferencePair {
  int prompt_id = -1;
  TokenSeq prompt;
  Response chosen;    ///< y_w, reward 1
  Response rejected;  ///< y_l, reward 0
};

/// A (prompt, response) draw used by the exploration bias of ED-iDPO.
struct BiasSample {
  TokenSeq prompt;
  Response response;
};

struct RolloutGroup {
  int prompt_id = -1;
  TokenSeq prompt;
  std::vector<Response> responses;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> advantages;
};

struct LossValueGrad {
  double value = 0.0;
  ParamMatrix grad;
};

struct GroupAdvantages {
  std::vector<double> advantages;
  double mean = 0.0;
  double stddev = 0.0;
};

enum class AdvantageMode {
  kStandardized,  ///< (r - mu) / sigma with the sigma_floor fallback
  kMeanOnly,      ///< r - mu
};

/// Group-relative advantages with population standard deviation. Groups whose
/// sigma does not exceed sigma_floor get all-zero advantages. Throws
/// kGroupTooSmall for G < 2.
GroupAdvantages group_advantages(std::span<const double> rewards, double sigma_floor,
                                 AdvantageMode mode = AdvantageMode::kStandardized);

/// Fills mean/stddev/advantages of a group from its responses' rewards.
void assign_advantages(RolloutGroup& group, double sigma_floor,
                       AdvantageMode mode = AdvantageMode::kStandardized);

/// -mean log sigmoid(beta * [(log pi - log pi_ref)(y_w) - (log pi - log pi_ref)(y_l)]).
LossValueGrad dpo_loss(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref,
                       std::span<const PreferencePair> pairs, double beta);

/// alpha * beta * mean_y [log pi(y|x) - log pi_prev(y|x)] over samples drawn
/// from the previous iterate. Minimizing it pushes the policy away from pi_prev.
LossValueGrad reward_bias_idpo(const SoftmaxPolicy& policy, const SoftmaxPolicy& prev,
                               std::span<const BiasSample> samples, double alpha, double beta);

/// dpo_loss + reward_bias_idpo; alpha == 0 skips the bias term entirely.
LossValueGrad ed_idpo_loss(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref, const SoftmaxPolicy& prev,
                           std::span<const PreferencePair> pairs, std::span<const BiasSample> samples,
                           double alpha, double beta);

struct ClipRange {
  double low = 0.2;
  double high = 0.2;
};

/// Clipped group-relative surrogate with exact per-token KL(pi || pi_ref),
/// length-normalized per response and averaged over responses then groups.
LossValueGrad grpo_loss(const SoftmaxPolicy& policy, const SoftmaxPolicy& old, const SoftmaxPolicy& ref,
                        std::span<const RolloutGroup> groups, ClipRange clip, double beta);

/// alpha * beta * mean_groups (1/G) sum_i (1/|y_i|) sum_t log(pi(y_t|s_t) / pi_ref(y_t|s_t)).
LossValueGrad reward_bias_grpo(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref,
                               std::span<const RolloutGroup> groups, double alpha, double beta);

/// grpo_loss + reward_bias_grpo; alpha == 0 skips the bias term entirely.
LossValueGrad ed_grpo_loss(const SoftmaxPolicy& policy, const SoftmaxPolicy& old, const SoftmaxPolicy& ref,
                           std::span<const RolloutGroup> groups, ClipRange clip, double alpha, double beta);

/// Exact KL(p || q) between two log-probability vectors.
double kl_divergence(std::span<const double> logp, std::span<const double> logq);

using LossEvaluator = std::function<double(const SoftmaxPolicy&)>;

struct Coord {
  std::size_t row;
  std::size_t col;
};

/// Central differences (L(w + h e_i) - L(w - h e_i)) / 2h on the listed
/// coordinates; all other entries of the result are zero.
ParamMatrix finite_diff_grad(const LossEvaluator& loss, const SoftmaxPolicy& policy, double h,
                             std::span<const Coord> coords);

/// Every (action, feature) coordinate whose feature is active in some state
/// visited while scoring the given responses.
std::vector<Coord> touched_coords(const SoftmaxPolicy& policy, std::span<const TokenSeq> prompts,
                                  std::span<const TokenSeq> responses);

}  // namespace edo

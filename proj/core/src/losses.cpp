#include "edo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace edo {
namespace {

// -log(sigmoid(m)) without overflow.
double softplus_neg(double m) { return m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "exploration coefficient alpha must be >= 0");
}

LossValueGrad zero_loss(const SoftmaxPolicy& policy) {
  return {0.0, ParamMatrix(policy.vocab_size(), policy.dim())};
}

// Calls fn(t, phi, logp_policy, logp_other) for every step of the response.
template <typename Fn>
void walk_pair(const SoftmaxPolicy& policy, const SoftmaxPolicy& other, std::span<const Token> prompt,
               std::span<const Token> response, Fn&& fn) {
  TokenSeq context(prompt.begin(), prompt.end());
  const auto& fm = policy.feature_map();
  for (std::size_t t = 0; t < response.size(); ++t) {
    const Token y = response[t];
    if (y < 0 || static_cast<std::size_t>(y) >= policy.vocab_size()) {
      throw Error(ErrorCode::kInvalidToken, "response token " + std::to_string(y) + " outside vocabulary");
    }
    const FeatureVec phi = featurize(context, fm);
    auto lp = policy.logits(phi);
    log_softmax_inplace(lp);
    auto lq = other.logits(phi);
    log_softmax_inplace(lq);
    fn(t, phi, lp, lq);
    context.push_back(y);
  }
}

}  // namespace

GroupAdvantages group_advantages(std::span<const double> rewards, double sigma_floor, AdvantageMode mode) {
  if (rewards.size() < 2) throw Error(ErrorCode::kGroupTooSmall, "group advantages need G >= 2");
  GroupAdvantages out;
  const double n = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) sum += r;
  out.mean = sum / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - out.mean) * (r - out.mean);
  out.stddev = std::sqrt(ss / n);
  out.advantages.assign(rewards.size(), 0.0);
  if (mode == AdvantageMode::kMeanOnly) {
    for (std::size_t i = 0; i < rewards.size(); ++i) out.advantages[i] = rewards[i] - out.mean;
  } else if (out.stddev > sigma_floor) {
    for (std::size_t i = 0; i < rewards.size(); ++i) out.advantages[i] = (rewards[i] - out.mean) / out.stddev;
  }
  return out;
}

void assign_advantages(RolloutGroup& group, double sigma_floor, AdvantageMode mode) {
  std::vector<double> rewards;
  rewards.reserve(group.responses.size());
  for (const auto& r : group.responses) rewards.push_back(static_cast<double>(r.reward));
  auto adv = group_advantages(rewards, sigma_floor, mode);
  group.mean = adv.mean;
  group.stddev = adv.stddev;
  group.advantages = std::move(adv.advantages);
}

LossValueGrad dpo_loss(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref, std::span<const PreferencePair> pairs,
                       double beta) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyBatch, "dpo_loss needs at least one preference pair");
  LossValueGrad out = zero_loss(policy);
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  ParamMatrix grad_w(policy.vocab_size(), policy.dim());
  ParamMatrix grad_l(policy.vocab_size(), policy.dim());
  for (const auto& pair : pairs) {
    grad_w.set_zero();
    grad_l.set_zero();
    const double lw = accumulate_logprob_grad(policy, pair.prompt, pair.chosen.tokens, 1.0, grad_w);
    const double ll = accumulate_logprob_grad(policy, pair.prompt, pair.rejected.tokens, 1.0, grad_l);
    const double rw = sequence_logprob(ref, pair.prompt, pair.chosen.tokens);
    const double rl = sequence_logprob(ref, pair.prompt, pair.rejected.tokens);
    const double margin = beta * ((lw - rw) - (ll - rl));
    out.value += inv_n * softplus_neg(margin);
    const double coef = -inv_n * beta * sigmoid(-margin);
    out.grad.add_scaled(grad_w, coef);
    out.grad.add_scaled(grad_l, -coef);
  }
  return out;
}

LossValueGrad reward_bias_idpo(const SoftmaxPolicy& policy, const SoftmaxPolicy& prev,
                               std::span<const BiasSample> samples, double alpha, double beta) {
  check_alpha(alpha);
  LossValueGrad out = zero_loss(policy);
  if (alpha == 0.0 || samples.empty()) return out;
  const double scale = alpha * beta / static_cast<double>(samples.size());
  for (const auto& s : samples) {
    const double lp = accumulate_logprob_grad(policy, s.prompt, s.response.tokens, scale, out.grad);
    const double lq = sequence_logprob(prev, s.prompt, s.response.tokens);
    out.value += scale * (lp - lq);
  }
  return out;
}

LossValueGrad ed_idpo_loss(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref, const SoftmaxPolicy& prev,
                           std::span<const PreferencePair> pairs, std::span<const BiasSample> samples, double alpha,
                           double beta) {
  check_alpha(alpha);
  LossValueGrad out = dpo_loss(policy, ref, pairs, beta);
  if (alpha == 0.0) return out;
  const LossValueGrad bias = reward_bias_idpo(policy, prev, samples, alpha, beta);
  out.value += bias.value;
  out.grad.add_scaled(bias.grad, 1.0);
  return out;
}

double kl_divergence(std::span<const double> logp, std::span<const double> logq) {
  double kl = 0.0;
  for (std::size_t a = 0; a < logp.size(); ++a) kl += std::exp(logp[a]) * (logp[a] - logq[a]);
  return kl;
}

LossValueGrad grpo_loss(const SoftmaxPolicy& policy, const SoftmaxPolicy& old, const SoftmaxPolicy& ref,
                        std::span<const RolloutGroup> groups, ClipRange clip, double beta) {
  if (groups.empty()) throw Error(ErrorCode::kEmptyBatch, "grpo_loss needs at least one group");
  LossValueGrad out = zero_loss(policy);
  const double inv_groups = 1.0 / static_cast<double>(groups.size());
  const std::size_t V = policy.vocab_size();
  std::vector<double> g(V);
  for (const auto& group : groups) {
    if (group.advantages.size() != group.responses.size() || group.responses.empty()) {
      throw Error(ErrorCode::kInvalidGroup, "group for prompt " + std::to_string(group.prompt_id) +
                                                " has no advantage per response");
    }
    const double inv_g = inv_groups / static_cast<double>(group.responses.size());
    for (std::size_t i = 0; i < group.responses.size(); ++i) {
      const auto& tokens = group.responses[i].tokens;
      if (tokens.empty()) continue;
      const double w = inv_g / static_cast<double>(tokens.size());
      const double adv = group.advantages[i];
      TokenSeq context = group.prompt;
      for (const Token y : tokens) {
        if (y < 0 || static_cast<std::size_t>(y) >= V) {
          throw Error(ErrorCode::kInvalidToken, "response token " + std::to_string(y) + " outside vocabulary");
        }
        const FeatureVec phi = featurize(context, policy.feature_map());
        auto lp = policy.logits(phi);
        log_softmax_inplace(lp);
        auto lo = old.logits(phi);
        log_softmax_inplace(lo);
        auto lr = ref.logits(phi);
        log_softmax_inplace(lr);

        const double ratio = std::exp(lp[y] - lo[y]);
        double surrogate = ratio * adv;
        bool clipped = false;
        if (adv > 0.0 && ratio > 1.0 + clip.high) {
          surrogate = (1.0 + clip.high) * adv;
          clipped = true;
        } else if (adv < 0.0 && ratio < 1.0 - clip.low) {
          surrogate = (1.0 - clip.low) * adv;
          clipped = true;
        }
        const double kl = kl_divergence(lp, lr);
        out.value -= w * (surrogate - beta * kl);

        // d(-surrogate + beta*KL)/dz.
        for (std::size_t a = 0; a < V; ++a) {
          const double p = std::exp(lp[a]);
          g[a] = beta * p * (lp[a] - lr[a] - kl);
        }
        if (!clipped && adv != 0.0) {
          for (std::size_t a = 0; a < V; ++a) g[a] += ratio * adv * std::exp(lp[a]);
          g[y] -= ratio * adv;
        }
        accumulate_state_grad(phi, g, w, out.grad);
        context.push_back(y);
      }
    }
  }
  return out;
}

LossValueGrad reward_bias_grpo(const SoftmaxPolicy& policy, const SoftmaxPolicy& ref,
                               std::span<const RolloutGroup> groups, double alpha, double beta) {
  check_alpha(alpha);
  LossValueGrad out = zero_loss(policy);
  if (alpha == 0.0 || groups.empty()) return out;
  const double inv_groups = 1.0 / static_cast<double>(groups.size());
  std::vector<double> g(policy.vocab_size());
  for (const auto& group : groups) {
    if (group.responses.empty()) throw Error(ErrorCode::kInvalidGroup, "empty rollout group");
    const double inv_g = inv_groups / static_cast<double>(group.responses.size());
    for (const auto& response : group.responses) {
      if (response.tokens.empty()) continue;
      const double w = alpha * beta * inv_g / static_cast<double>(response.tokens.size());
      walk_pair(policy, ref, group.prompt, response.tokens,
                [&](std::size_t t, const FeatureVec& phi, const std::vector<double>& lp, const std::vector<double>& lr) {
                  const Token y = response.tokens[t];
                  out.value += w * (lp[y] - lr[y]);
                  for (std::size_t a = 0; a < g.size(); ++a) g[a] = -std::exp(lp[a]);
                  g[y] += 1.0;
                  accumulate_state_grad(phi, g, w, out.grad);
                });
    }
  }
  return out;
}

LossValueGrad ed_grpo_loss(const SoftmaxPolicy& policy, const SoftmaxPolicy& old, const SoftmaxPolicy& ref,
                           std::span<const RolloutGroup> groups, ClipRange clip, double alpha, double beta) {
  check_alpha(alpha);
  LossValueGrad out = grpo_loss(policy, old, ref, groups, clip, beta);
  if (alpha == 0.0) return out;
  const LossValueGrad bias = reward_bias_grpo(policy, ref, groups, alpha, beta);
  out.value += bias.value;
  out.grad.add_scaled(bias.grad, 1.0);
  return out;
}

ParamMatrix finite_diff_grad(const LossEvaluator& loss, const SoftmaxPolicy& policy, double h,
                             std::span<const Coord> coords) {
  if (!(h > 0.0)) throw Error(ErrorCode::kInvalidConfig, "finite-difference step must be positive");
  ParamMatrix out(policy.vocab_size(), policy.dim());
  SoftmaxPolicy probe = policy;
  for (const auto& c : coords) {
    double& w = probe.weights()(c.row, c.col);
    const double saved = w;
    w = saved + h;
    const double up = loss(probe);
    w = saved - h;
    const double down = loss(probe);
    w = saved;
    out(c.row, c.col) = (up - down) / (2.0 * h);
  }
  return out;
}

std::vector<Coord> touched_coords(const SoftmaxPolicy& policy, std::span<const TokenSeq> prompts,
                                  std::span<const TokenSeq> responses) {
  std::set<std::uint32_t> features;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    TokenSeq context = prompts[i];
    for (Token y : responses[i]) {
      for (auto f : featurize(context, policy.feature_map())) features.insert(f);
      context.push_back(y);
    }
  }
  std::vector<Coord> out;
  for (std::size_t a = 0; a < policy.vocab_size(); ++a) {
    for (auto f : features) out.push_back({a, f});
  }
  return out;
}

}  // namespace edo

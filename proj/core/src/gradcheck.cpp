#include "edo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "edo/losses.hpp"
#include "edo/rmodel.hpp"
#include "edo/rng.hpp"

namespace edo {
namespace {

struct Instance {
  FeatureMap fm;
  SoftmaxPolicy policy, ref, old;
  std::vector<PreferencePair> pairs;
  std::vector<BiasSample> samples;
  std::vector<RolloutGroup> groups;
  std::vector<TokenSeq> prompts;    // one per scored response, aligned with responses
  std::vector<TokenSeq> responses;
  double alpha = 0.0;
  double beta = 0.0;
  ClipRange clip;
};

std::size_t between(RngStream& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

TokenSeq random_tokens(RngStream& rng, std::size_t len, std::size_t vocab) {
  TokenSeq out(len);
  for (auto& t : out) t = static_cast<Token>(rng.index(vocab));
  return out;
}

SoftmaxPolicy random_policy(const FeatureMap& fm, RngStream& rng, double scale) {
  SoftmaxPolicy p(fm);
  for (double& w : p.weights().data()) w = scale * rng.normal();
  return p;
}

SoftmaxPolicy perturbed(const SoftmaxPolicy& base, RngStream& rng, double scale) {
  SoftmaxPolicy p = base;
  for (double& w : p.weights().data()) w += scale * rng.normal();
  return p;
}

Response make_response(TokenSeq tokens, int reward) {
  Response r;
  r.tokens = std::move(tokens);
  r.reward = reward;
  return r;
}

Instance make_instance(const GradcheckOptions& o, std::size_t k) {
  RngStream rng(o.seed, Stream::kInit, 0xC4ECull, k);
  Instance in;
  in.fm.vocab_size = between(rng, 3, o.max_vocab);
  in.fm.dim = between(rng, 8, o.max_dim);
  in.fm.context_window = between(rng, 1, 4);
  in.policy = random_policy(in.fm, rng, 0.5);
  in.ref = perturbed(in.policy, rng, 0.3);
  in.old = perturbed(in.policy, rng, 0.1);
  in.alpha = 0.05 + 0.5 * rng.uniform();
  in.beta = 0.1 + rng.uniform();
  in.clip = {0.1 + 0.2 * rng.uniform(), 0.1 + 0.3 * rng.uniform()};
  const std::size_t V = in.fm.vocab_size;

  auto add = [&](const TokenSeq& prompt, const TokenSeq& response) {
    in.prompts.push_back(prompt);
    in.responses.push_back(response);
  };
  const std::size_t n_groups = between(rng, 1, 3);
  for (std::size_t gi = 0; gi < n_groups; ++gi) {
    const TokenSeq prompt = random_tokens(rng, between(rng, 1, 4), V);
    RolloutGroup g;
    g.prompt_id = static_cast<int>(gi);
    g.prompt = prompt;
    const std::size_t G = between(rng, 2, o.max_group);
    for (std::size_t i = 0; i < G; ++i) {
      g.responses.push_back(make_response(random_tokens(rng, between(rng, 1, o.max_len), V),
                                          static_cast<int>(rng.index(2))));
      add(prompt, g.responses.back().tokens);
      in.samples.push_back({prompt, g.responses.back()});
    }
    // Guarantee a non-degenerate group so the clipped surrogate is exercised.
    g.responses[0].reward = 1;
    g.responses[1].reward = 0;
    assign_advantages(g, 1e-6);
    for (std::size_t i = 0; i + 1 < g.responses.size(); i += 2) {
      in.pairs.push_back({g.prompt_id, prompt, g.responses[i], g.responses[i + 1]});
    }
    in.groups.push_back(std::move(g));
  }
  return in;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

using PolicyLoss = std::function<LossValueGrad(const SoftmaxPolicy&)>;

GradcheckResult check_policy_loss(const std::string& name, std::size_t k, const Instance& in, const PolicyLoss& fn,
                                  const GradcheckOptions& o) {
  LossValueGrad analytic = fn(in.policy);
  const auto coords = touched_coords(in.policy, in.prompts, in.responses);
  if (o.corrupt != 0.0 && !coords.empty()) analytic.grad(coords[0].row, coords[0].col) += o.corrupt;
  const ParamMatrix fd =
      finite_diff_grad([&](const SoftmaxPolicy& p) { return fn(p).value; }, in.policy, o.h, coords);
  std::vector<double> a, n;
  for (const auto& c : coords) {
    a.push_back(analytic.grad(c.row, c.col));
    n.push_back(fd(c.row, c.col));
  }
  GradcheckResult r{name, k, rel_error(a, n), false};
  r.passed = r.rel_error < o.tolerance;
  return r;
}

GradcheckResult check_nce(std::size_t k, const GradcheckOptions& o) {
  RngStream rng(o.seed, Stream::kInit, 0x0CEull, k);
  FeatureMap fm;
  fm.vocab_size = between(rng, 3, o.max_vocab);
  fm.dim = between(rng, 8, o.max_dim);
  fm.context_window = between(rng, 1, 4);
  RewardModel rm(fm);
  for (double& w : rm.weights) w = 0.5 * rng.normal();
  const TokenSeq prompt = random_tokens(rng, between(rng, 1, 4), fm.vocab_size);
  const TokenSeq positive = random_tokens(rng, between(rng, 1, o.max_len), fm.vocab_size);
  std::vector<TokenSeq> negatives(between(rng, 1, 6));
  for (auto& n : negatives) n = random_tokens(rng, between(rng, 1, o.max_len), fm.vocab_size);
  const double reg = 0.01 + 0.1 * rng.uniform();

  auto analytic = nce_loss(rm, prompt, positive, negatives, reg).grad;
  if (o.corrupt != 0.0) {
    const auto support = pooled_features(prompt, positive, fm);
    analytic[support.index.empty() ? 0 : support.index[0]] += o.corrupt;
  }
  std::vector<double> fd(rm.weights.size());
  RewardModel probe = rm;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double saved = probe.weights[i];
    probe.weights[i] = saved + o.h;
    const double up = nce_loss(probe, prompt, positive, negatives, reg).value;
    probe.weights[i] = saved - o.h;
    const double down = nce_loss(probe, prompt, positive, negatives, reg).value;
    probe.weights[i] = saved;
    fd[i] = (up - down) / (2.0 * o.h);
  }
  GradcheckResult r{"nce", k, rel_error(analytic, fd), false};
  r.passed = r.rel_error < o.tolerance;
  return r;
}

}  // namespace

const std::vector<std::string>& gradcheck_losses() {
  static const std::vector<std::string> names = {"dpo",       "ed-idpo",   "bias-idpo", "grpo",
                                                 "ed-grpo",   "bias-grpo", "nce"};
  return names;
}

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& o) {
  std::vector<GradcheckResult> out;
  for (std::size_t k = 0; k < o.instances; ++k) {
    const Instance in = make_instance(o, k);
    const std::vector<std::pair<std::string, PolicyLoss>> losses = {
        {"dpo", [&](const SoftmaxPolicy& p) { return dpo_loss(p, in.ref, in.pairs, in.beta); }},
        {"ed-idpo",
         [&](const SoftmaxPolicy& p) {
           return ed_idpo_loss(p, in.ref, in.old, in.pairs, in.samples, in.alpha, in.beta);
         }},
        {"bias-idpo",
         [&](const SoftmaxPolicy& p) { return reward_bias_idpo(p, in.old, in.samples, in.alpha, in.beta); }},
        {"grpo", [&](const SoftmaxPolicy& p) { return grpo_loss(p, in.old, in.ref, in.groups, in.clip, in.beta); }},
        {"ed-grpo",
         [&](const SoftmaxPolicy& p) {
           return ed_grpo_loss(p, in.old, in.ref, in.groups, in.clip, in.alpha, in.beta);
         }},
        {"bias-grpo",
         [&](const SoftmaxPolicy& p) { return reward_bias_grpo(p, in.ref, in.groups, in.alpha, in.beta); }},
    };
    for (const auto& [name, fn] : losses) out.push_back(check_policy_loss(name, k, in, fn, o));
    out.push_back(check_nce(k, o));
  }
  return out;
}

}  // namespace edo

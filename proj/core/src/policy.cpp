#include "edo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"

namespace edo {
namespace {

constexpr std::string_view kPolicyMagic = "EDOPOLCY";
constexpr std::uint32_t kPolicyFormatVersion = 1;

void check_token(Token t, std::size_t vocab) {
  if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
    throw Error(ErrorCode::kInvalidToken, "token " + std::to_string(t) + " outside vocabulary of size " +
                                              std::to_string(vocab));
  }
}

// Shared by every per-step loop: walks the response and yields the state
// features before each token.
template <typename Fn>
void for_each_step(const FeatureMap& fm, std::span<const Token> prompt, std::span<const Token> response,
                   Fn&& fn) {
  TokenSeq context(prompt.begin(), prompt.end());
  context.reserve(prompt.size() + response.size());
  for (std::size_t t = 0; t < response.size(); ++t) {
    check_token(response[t], fm.vocab_size);
    fn(t, featurize(context, fm));
    context.push_back(response[t]);
  }
}

}  // namespace

std::uint32_t FeatureMap::slot_index(std::size_t slot, Token token) const {
  // Two odd multipliers keep (slot, token) pairs apart before the final mix.
  std::uint64_t h = (static_cast<std::uint64_t>(slot) + 1) * 0x9E3779B97F4A7C15ULL;
  h ^= (static_cast<std::uint64_t>(token) + 1) * 0xC2B2AE3D27D4EB4FULL;
  h ^= h >> 32;
  h *= 0xD6E8FEB86659FD93ULL;
  h ^= h >> 32;
  return static_cast<std::uint32_t>(h % dim);
}

std::vector<std::uint32_t> slot_indices(std::span<const Token> context, const FeatureMap& fm) {
  std::vector<std::uint32_t> out(fm.context_window);
  for (std::size_t slot = 0; slot < fm.context_window; ++slot) {
    Token tok = slot < context.size() ? context[context.size() - 1 - slot] : fm.pad_token();
    out[slot] = fm.slot_index(slot, tok);
  }
  return out;
}

FeatureVec featurize(std::span<const Token> context, const FeatureMap& fm) {
  FeatureVec idx = slot_indices(context, fm);
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

SoftmaxPolicy::SoftmaxPolicy(FeatureMap fm, double temperature)
    : fm_(fm), temperature_(temperature), weights_(fm.vocab_size, fm.dim) {
  if (fm.vocab_size == 0 || fm.dim == 0 || fm.context_window == 0) {
    throw Error(ErrorCode::kInvalidConfig, "feature map needs positive vocab, dim and window");
  }
  set_temperature(temperature);
}

void SoftmaxPolicy::set_temperature(double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidConfig, "temperature must be positive");
  temperature_ = tau;
}

std::vector<double> SoftmaxPolicy::logits(const FeatureVec& features) const {
  std::vector<double> out(vocab_size(), 0.0);
  for (std::size_t a = 0; a < out.size(); ++a) {
    double acc = 0.0;
    for (auto i : features) acc += weights_(a, i);
    out[a] = acc;
  }
  return out;
}

void log_softmax_inplace(std::vector<double>& logits, double temperature) {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto& z : logits) {
    z /= temperature;
    mx = std::max(mx, z);
  }
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  for (auto& z : logits) z -= lse;
}

std::vector<double> action_logprobs(const SoftmaxPolicy& policy, std::span<const Token> context,
                                    double temperature) {
  auto lp = policy.logits(featurize(context, policy.feature_map()));
  log_softmax_inplace(lp, temperature);
  return lp;
}

double state_entropy(std::span<const double> logprobs) {
  double h = 0.0;
  for (double lp : logprobs) h -= std::exp(lp) * lp;
  return h;
}

Response sample_response(const SoftmaxPolicy& policy, int prompt_id, std::span<const Token> prompt,
                         const SampleOptions& options, RngStream& rng) {
  if (options.max_len == 0) throw Error(ErrorCode::kInvalidConfig, "max_len must be >= 1");
  Response r;
  r.prompt_id = prompt_id;
  TokenSeq context(prompt.begin(), prompt.end());
  const auto& fm = policy.feature_map();
  for (std::size_t t = 0; t < options.max_len; ++t) {
    auto logits = policy.logits(featurize(context, fm));
    Token chosen = 0;
    double logprob = 0.0;
    if (options.greedy) {
      chosen = static_cast<Token>(std::max_element(logits.begin(), logits.end()) - logits.begin());
      log_softmax_inplace(logits, 1.0);
      logprob = logits[chosen];
    } else {
      log_softmax_inplace(logits, options.temperature);
      const double u = rng.uniform();
      double cdf = 0.0;
      chosen = static_cast<Token>(logits.size() - 1);
      for (std::size_t a = 0; a < logits.size(); ++a) {
        cdf += std::exp(logits[a]);
        if (u < cdf) {
          chosen = static_cast<Token>(a);
          break;
        }
      }
      logprob = logits[chosen];
    }
    r.tokens.push_back(chosen);
    r.step_logprobs.push_back(logprob);
    context.push_back(chosen);
    if (chosen == options.terminator) break;
  }
  return r;
}

double sequence_logprob(const SoftmaxPolicy& policy, std::span<const Token> prompt,
                        std::span<const Token> response, double temperature) {
  double total = 0.0;
  for_each_step(policy.feature_map(), prompt, response, [&](std::size_t t, const FeatureVec& phi) {
    auto lp = policy.logits(phi);
    log_softmax_inplace(lp, temperature);
    total += lp[response[t]];
  });
  return total;
}

void accumulate_state_grad(const FeatureVec& features, std::span<const double> logit_grad, double scale,
                           ParamMatrix& grad) {
  for (std::size_t a = 0; a < logit_grad.size(); ++a) {
    const double g = scale * logit_grad[a];
    if (g == 0.0) continue;
    for (auto i : features) grad(a, i) += g;
  }
}

double accumulate_logprob_grad(const SoftmaxPolicy& policy, std::span<const Token> prompt,
                               std::span<const Token> response, double scale, ParamMatrix& grad) {
  double total = 0.0;
  std::vector<double> g(policy.vocab_size());
  for_each_step(policy.feature_map(), prompt, response, [&](std::size_t t, const FeatureVec& phi) {
    auto lp = policy.logits(phi);
    log_softmax_inplace(lp, 1.0);
    total += lp[response[t]];
    for (std::size_t a = 0; a < g.size(); ++a) g[a] = -std::exp(lp[a]);
    g[response[t]] += 1.0;
    accumulate_state_grad(phi, g, scale, grad);
  });
  return total;
}

LogProbGrad sequence_logprob_grad(const SoftmaxPolicy& policy, std::span<const Token> prompt,
                                  std::span<const Token> response) {
  LogProbGrad out{0.0, ParamMatrix(policy.vocab_size(), policy.dim())};
  out.value = accumulate_logprob_grad(policy, prompt, response, 1.0, out.grad);
  return out;
}

double mean_policy_entropy(const SoftmaxPolicy& policy, std::span<const TokenSeq> prompts,
                           std::size_t n_samples, const SampleOptions& options, std::uint64_t seed) {
  if (n_samples == 0) throw Error(ErrorCode::kInvalidConfig, "n_samples must be >= 1");
  SampleOptions opts = options;
  opts.temperature = 1.0;
  opts.greedy = false;
  double total = 0.0;
  std::size_t states = 0;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    for (std::size_t s = 0; s < n_samples; ++s) {
      RngStream rng(seed, Stream::kEntropy, p, s);
      const Response r = sample_response(policy, static_cast<int>(p), prompts[p], opts, rng);
      TokenSeq context = prompts[p];
      for (Token tok : r.tokens) {
        total += state_entropy(action_logprobs(policy, context));
        ++states;
        context.push_back(tok);
      }
    }
  }
  return states == 0 ? 0.0 : total / static_cast<double>(states);
}

void save_policy(const SoftmaxPolicy& policy, std::ostream& out) {
  const auto& fm = policy.feature_map();
  detail::write_magic(out, kPolicyMagic);
  detail::write_le<std::uint32_t>(out, kPolicyFormatVersion);
  detail::write_le<std::uint64_t>(out, fm.vocab_size);
  detail::write_le<std::uint64_t>(out, fm.dim);
  detail::write_le<std::uint64_t>(out, fm.context_window);
  detail::write_le<std::uint32_t>(out, fm.hash_id);
  for (double w : policy.weights().data()) detail::write_le<double>(out, w);
  if (!out) throw Error(ErrorCode::kIo, "failed writing policy checkpoint");
}

SoftmaxPolicy load_policy(std::istream& in) {
  detail::expect_magic(in, kPolicyMagic);
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kPolicyFormatVersion) {
    throw Error(ErrorCode::kIo, "unsupported policy checkpoint version " + std::to_string(version));
  }
  FeatureMap fm;
  fm.vocab_size = detail::read_le<std::uint64_t>(in);
  fm.dim = detail::read_le<std::uint64_t>(in);
  fm.context_window = detail::read_le<std::uint64_t>(in);
  fm.hash_id = detail::read_le<std::uint32_t>(in);
  if (fm.hash_id != FeatureMap::kMultiplicativeHashV1) {
    throw Error(ErrorCode::kIo, "unknown feature hash id " + std::to_string(fm.hash_id));
  }
  SoftmaxPolicy policy(fm);
  for (double& w : policy.weights().data()) w = detail::read_le<double>(in);
  return policy;
}

void save_policy(const SoftmaxPolicy& policy, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path);
  save_policy(policy, out);
}

SoftmaxPolicy load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return load_policy(in);
}

}  // namespace edo

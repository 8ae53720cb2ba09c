#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edo/common.hpp"
#include "edo/rng.hpp"

namespace edo {

/// Hashed trailing-window encoding of a decoding state. Slot 0 holds the most
/// recent token; contexts shorter than the window are left-padded with
/// pad_token() == vocab_size, which is never emitted by a policy.
struct FeatureMap {
  static constexpr std::uint32_t kMultiplicativeHashV1 = 1;

  std::size_t context_window = 3;
  std::size_t dim = 4096;
  std::size_t vocab_size = 0;
  std::uint32_t hash_id = kMultiplicativeHashV1;

  Token pad_token() const noexcept { return static_cast<Token>(vocab_size); }

  /// Feature index of (slot, token); deterministic, collisions allowed.
  std::uint32_t slot_index(std::size_t slot, Token token) const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// Sorted, strictly increasing indices of unit-valued features.
using FeatureVec = std::vector<std::uint32_t>;

/// One feature index per window slot, before de-duplication.
std::vector<std::uint32_t> slot_indices(std::span<const Token> context, const FeatureMap& fm);

FeatureVec featurize(std::span<const Token> context, const FeatureMap& fm);

struct Response {
  int prompt_id = -1;
  TokenSeq tokens;
  std::vector<double> step_logprobs;
  std::optional<TokenSeq> answer;
  int reward = 0;

  friend bool operator==(const Response&, const Response&) = default;
};

/// Linear-softmax token policy pi(a | s) = softmax(W phi(s) / tau).
class SoftmaxPolicy {
 public:
  SoftmaxPolicy() = default;
  explicit SoftmaxPolicy(FeatureMap fm, double temperature = 1.0);

  const FeatureMap& feature_map() const noexcept { return fm_; }
  std::size_t vocab_size() const noexcept { return fm_.vocab_size; }
  std::size_t dim() const noexcept { return fm_.dim; }

  double temperature() const noexcept { return temperature_; }
  void set_temperature(double tau);

  ParamMatrix& weights() noexcept { return weights_; }
  const ParamMatrix& weights() const noexcept { return weights_; }

  /// Raw logits W phi for a featurized state.
  std::vector<double> logits(const FeatureVec& features) const;

  friend bool operator==(const SoftmaxPolicy&, const SoftmaxPolicy&) = default;

 private:
  FeatureMap fm_;
  double temperature_ = 1.0;
  ParamMatrix weights_;
};

/// In-place stabilized log-softmax of logits / temperature.
void log_softmax_inplace(std::vector<double>& logits, double temperature = 1.0);

/// log pi(. | context) at the given temperature; sums to one in probability space.
std::vector<double> action_logprobs(const SoftmaxPolicy& policy, std::span<const Token> context,
                                    double temperature = 1.0);

/// Exact entropy -sum_a pi log pi of one state's distribution (nats).
double state_entropy(std::span<const double> logprobs);

struct SampleOptions {
  std::size_t max_len = 8;
  double temperature = 1.0;
  bool greedy = false;
  Token terminator = -1;  ///< stop after emitting this token; -1 disables
};

/// Autoregressive rollout. Uses inverse-CDF sampling with one uniform draw per
/// step. Greedy mode records temperature-1 log-probabilities and breaks ties by
/// lowest token id.
Response sample_response(const SoftmaxPolicy& policy, int prompt_id, std::span<const Token> prompt,
                         const SampleOptions& options, RngStream& rng);

/// sum_t log pi(y_t | prompt, y_<t). Throws kInvalidToken for tokens outside the vocabulary.
double sequence_logprob(const SoftmaxPolicy& policy, std::span<const Token> prompt,
                        std::span<const Token> response, double temperature = 1.0);

struct LogProbGrad {
  double value = 0.0;
  ParamMatrix grad;
};

/// Value and analytic gradient sum_t (e_{y_t} - pi(.|s_t)) (x) phi(s_t).
LogProbGrad sequence_logprob_grad(const SoftmaxPolicy& policy, std::span<const Token> prompt,
                                  std::span<const Token> response);

/// Adds scale * grad log pi(response | prompt) into `grad`; returns the log-probability.
double accumulate_logprob_grad(const SoftmaxPolicy& policy, std::span<const Token> prompt,
                               std::span<const Token> response, double scale, ParamMatrix& grad);

/// Adds scale * (g (x) phi) into grad for a per-logit gradient g.
void accumulate_state_grad(const FeatureVec& features, std::span<const double> logit_grad,
                           double scale, ParamMatrix& grad);

/// Average exact per-state entropy over the states visited by n_samples
/// temperature-1 rollouts per prompt.
double mean_policy_entropy(const SoftmaxPolicy& policy, std::span<const TokenSeq> prompts,
                           std::size_t n_samples, const SampleOptions& options, std::uint64_t seed);

/// Binary checkpoint: magic, format version, V, d, k, hash id, then W as
/// row-major little-endian float64.
void save_policy(const SoftmaxPolicy& policy, std::ostream& out);
SoftmaxPolicy load_policy(std::istream& in);
void save_policy(const SoftmaxPolicy& policy, const std::string& path);
SoftmaxPolicy load_policy(const std::string& path);

}  // namespace edo

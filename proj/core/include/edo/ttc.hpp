#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edo/policy.hpp"
#include "edo/rmodel.hpp"
#include "edo/rng.hpp"
#include "edo/tasks.hpp"

namespace edo {

enum class Strategy { kGreedy, kSelfConsistency, kBestOfN, kSearch };

const char* to_string(Strategy s);
/// Accepts "greedy", "sc", "bon", "search". Throws kInvalidConfig otherwise.
Strategy parse_strategy(const std::string& name);

struct Candidate {
  Response response;             ///< answer and reward already filled in
  std::optional<double> score;   ///< reward-model score, Best-of-N only
};

struct DecodeResult {
  Strategy strategy = Strategy::kGreedy;
  std::vector<Candidate> pool;
  std::size_t index = 0;                   ///< chosen = pool[index]
  std::optional<TokenSeq> winning_answer;  ///< vote winner; chosen answer for other strategies

  const Response& chosen() const { return pool.at(index).response; }
  std::size_t pool_size() const noexcept { return pool.size(); }
};

struct VoteOutcome {
  std::optional<TokenSeq> answer;  ///< none only when every vote is null
  std::size_t index = 0;           ///< first candidate carrying the winner
};

/// Plurality over answers. Null votes form their own bucket that wins only
/// when nothing else was voted for; count ties go to the lexicographically
/// smallest answer.
VoteOutcome majority_vote(std::span<const std::optional<TokenSeq>> answers);

/// Index of the maximum score, lowest index on ties. Requires a non-empty span.
std::size_t argmax_first(std::span<const double> scores);

/// Argmax-per-step decode; a pool of one.
DecodeResult greedy_decode(const SoftmaxPolicy& policy, const Task& task, const Prompt& prompt,
                           const SampleOptions& options);

/// n draws at options.temperature, then majority vote over extracted answers.
DecodeResult self_consistency(const SoftmaxPolicy& policy, const Task& task, const Prompt& prompt, std::size_t n,
                              const SampleOptions& options, RngStream& rng);

/// n draws scored in full by the reward model; the highest score wins.
DecodeResult best_of_n(const SoftmaxPolicy& policy, const RewardModel& rm, const Task& task, const Prompt& prompt,
                       std::size_t n, const SampleOptions& options, RngStream& rng);

/// Draws n candidates; candidate j consumes the stream sequentially.
std::vector<Candidate> sample_pool(const SoftmaxPolicy& policy, const Task& task, const Prompt& prompt,
                                   std::size_t n, const SampleOptions& options, RngStream& rng);

}  // namespace edo

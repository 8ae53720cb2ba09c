#include "edo/ttc.hpp"

#include <algorithm>
#include <map>

namespace edo {

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kGreedy: return "greedy";
    case Strategy::kSelfConsistency: return "sc";
    case Strategy::kBestOfN: return "bon";
    case Strategy::kSearch: return "search";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "greedy") return Strategy::kGreedy;
  if (name == "sc") return Strategy::kSelfConsistency;
  if (name == "bon") return Strategy::kBestOfN;
  if (name == "search") return Strategy::kSearch;
  throw Error(ErrorCode::kInvalidConfig, "unknown strategy '" + name + "' (expected greedy, sc, bon, search)");
}

VoteOutcome majority_vote(std::span<const std::optional<TokenSeq>> answers) {
  if (answers.empty()) throw Error(ErrorCode::kEmptyBatch, "majority vote over an empty pool");
  // std::map orders keys lexicographically, so the first maximum is the tie winner.
  std::map<TokenSeq, std::size_t> counts;
  for (const auto& a : answers) {
    if (a) ++counts[*a];
  }
  VoteOutcome out;
  if (counts.empty()) return out;
  std::size_t best = 0;
  for (const auto& [answer, count] : counts) {
    if (count > best) {
      best = count;
      out.answer = answer;
    }
  }
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (answers[i] && *answers[i] == *out.answer) {
      out.index = i;
      break;
    }
  }
  return out;
}

std::size_t argmax_first(std::span<const double> scores) {
  if (scores.empty()) throw Error(ErrorCode::kEmptyBatch, "argmax over an empty pool");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::vector<Candidate> sample_pool(const SoftmaxPolicy& policy, const Task& task, const Prompt& prompt,
                                   std::size_t n, const SampleOptions& options, RngStream& rng) {
  if (n == 0) throw Error(ErrorCode::kInvalidConfig, "candidate pool size must be >= 1");
  SampleOptions opts = options;
  opts.greedy = false;
  std::vector<Candidate> pool(n);
  for (auto& c : pool) {
    c.response = sample_response(policy, prompt.id, prompt.tokens, opts, rng);
    task.score(c.response, prompt);
  }
  return pool;
}

DecodeResult greedy_decode(const SoftmaxPolicy& policy, const Task& task, const Prompt& prompt,
                           const SampleOptions& options) {
  SampleOptions opts = options;
  opts.greedy = true;
  RngStream unused(0);
  DecodeResult out;
  out.strategy = Strategy::kGreedy;
  out.pool.resize(1);
  out.pool[0].response = sample_response(policy, prompt.id, prompt.tokens, opts, unused);
  task.score(out.pool[0].response, prompt);
  out.winning_answer = out.pool[0].response.answer;
  return out;
}

DecodeResult self_consistency(const SoftmaxPolicy& policy, const Task& task, const Prompt& prompt, std::size_t n,
                              const SampleOptions& options, RngStream& rng) {
  DecodeResult out;
  out.strategy = Strategy::kSelfConsistency;
  out.pool = sample_pool(policy, task, prompt, n, options, rng);
  std::vector<std::optional<TokenSeq>> answers;
  answers.reserve(n);
  for (const auto& c : out.pool) answers.push_back(c.response.answer);
  const VoteOutcome vote = majority_vote(answers);
  out.index = vote.index;
  out.winning_answer = vote.answer;
  return out;
}

DecodeResult best_of_n(const SoftmaxPolicy& policy, const RewardModel& rm, const Task& task, const Prompt& prompt,
                       std::size_t n, const SampleOptions& options, RngStream& rng) {
  DecodeResult out;
  out.strategy = Strategy::kBestOfN;
  out.pool = sample_pool(policy, task, prompt, n, options, rng);
  std::vector<double> scores;
  scores.reserve(n);
  for (auto& c : out.pool) {
    c.score = rm_score(rm, prompt.tokens, c.response.tokens);
    scores.push_back(*c.score);
  }
  out.index = argmax_first(scores);
  out.winning_answer = out.pool[out.index].response.answer;
  return out;
}

}  // namespace edo

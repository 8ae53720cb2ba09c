#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edo/common.hpp"
#include "edo/policy.hpp"

namespace edo {

/// Token layout of the modular-arithmetic-chain family. Digits occupy
/// [0, modulus); the control tokens follow. The pad token is one past the
/// action vocabulary and only ever appears inside feature windows.
struct Vocab {
  int modulus = 7;

  Token digit(int v) const { return static_cast<Token>(v); }
  Token plus() const { return modulus; }
  Token times() const { return modulus + 1; }
  Token sep() const { return modulus + 2; }
  Token mark() const { return modulus + 3; }
  Token end() const { return modulus + 4; }
  Token pad() const { return modulus + 5; }
  std::size_t size() const { return static_cast<std::size_t>(modulus) + 5; }

  bool is_digit(Token t) const { return t >= 0 && t < modulus; }
  std::string name(Token t) const;
  std::string render(std::span<const Token> tokens) const;
};

struct TaskSpec {
  std::string family = "modular-arithmetic-chain";
  int modulus = 7;
  int min_chain = 1;  ///< number of operators per prompt, inclusive range
  int max_chain = 3;
  std::size_t n_train = 50;
  std::size_t n_eval = 20;
  std::uint64_t seed = 0;
};

/// "a0 op1 a1 ... opL aL SEP", evaluated left to right over Z_m.
struct Prompt {
  int id = -1;
  TokenSeq tokens;
  TokenSeq ground_truth;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

class Task {
 public:
  Task(TaskSpec spec, std::vector<Prompt> train, std::vector<Prompt> eval);

  const TaskSpec& spec() const noexcept { return spec_; }
  const Vocab& vocab() const noexcept { return vocab_; }
  const std::vector<Prompt>& train() const noexcept { return train_; }
  const std::vector<Prompt>& eval() const noexcept { return eval_; }

  /// Binary rule-based reward: 1 iff the extracted answer equals the ground truth token-for-token.
  int verify(std::span<const Token> response, const Prompt& prompt) const;

  /// Fills answer and reward of a sampled response.
  void score(Response& response, const Prompt& prompt) const;

  /// Every canonical correct derivation: the trailing k running values
  /// (k = 0..L) as scratch, then MARK answer END.
  std::vector<TokenSeq> derivations(const Prompt& prompt) const;

  /// The full running-value derivation (k = L).
  TokenSeq reference_derivation(const Prompt& prompt) const;

  FeatureMap feature_map(std::size_t context_window, std::size_t dim) const;

 private:
  TaskSpec spec_;
  Vocab vocab_;
  std::vector<Prompt> train_;
  std::vector<Prompt> eval_;
};

/// Deterministic generation of disjoint train/eval splits. Throws
/// kInvalidSpec for degenerate specs or when the prompt space is too small.
Task make_task(const TaskSpec& spec);

/// Running values of the left-to-right chain; the last one is the answer.
std::vector<int> running_values(std::span<const Token> prompt, const Vocab& vocab);

/// Span strictly after the last MARK up to (not including) the first END
/// after it, or to the end of the sequence. None if there is no MARK or the
/// span is empty.
std::optional<TokenSeq> extract_answer(std::span<const Token> tokens, const Vocab& vocab);

/// JSON lines, one object per prompt: {"id": int, "prompt": [int...],
/// "ground_truth": [int...], "text": "3 + 5 * 2 ="}.
void write_prompts_jsonl(std::ostream& out, std::span<const Prompt> prompts, const Vocab& vocab);
std::vector<Prompt> read_prompts_jsonl(std::istream& in);

}  // namespace edo

#include "edo/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

namespace edo {

std::string Vocab::name(Token t) const {
  if (is_digit(t)) return std::to_string(t);
  if (t == plus()) return "+";
  if (t == times()) return "*";
  if (t == sep()) return "=";
  if (t == mark()) return "#";
  if (t == end()) return "<end>";
  if (t == pad()) return "<pad>";
  return "<" + std::to_string(t) + "?>";
}

std::string Vocab::render(std::span<const Token> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += name(tokens[i]);
  }
  return out;
}

Task::Task(TaskSpec spec, std::vector<Prompt> train, std::vector<Prompt> eval)
    : spec_(std::move(spec)), vocab_{spec_.modulus}, train_(std::move(train)), eval_(std::move(eval)) {}

int Task::verify(std::span<const Token> response, const Prompt& prompt) const {
  const auto answer = extract_answer(response, vocab_);
  return answer && *answer == prompt.ground_truth ? 1 : 0;
}

void Task::score(Response& response, const Prompt& prompt) const {
  response.answer = extract_answer(response.tokens, vocab_);
  response.reward = response.answer && *response.answer == prompt.ground_truth ? 1 : 0;
}

std::vector<TokenSeq> Task::derivations(const Prompt& prompt) const {
  const auto values = running_values(prompt.tokens, vocab_);
  std::vector<TokenSeq> out;
  for (std::size_t k = 0; k <= values.size(); ++k) {
    TokenSeq seq;
    for (std::size_t i = values.size() - k; i < values.size(); ++i) seq.push_back(vocab_.digit(values[i]));
    seq.push_back(vocab_.mark());
    seq.insert(seq.end(), prompt.ground_truth.begin(), prompt.ground_truth.end());
    seq.push_back(vocab_.end());
    out.push_back(std::move(seq));
  }
  return out;
}

TokenSeq Task::reference_derivation(const Prompt& prompt) const { return derivations(prompt).back(); }

FeatureMap Task::feature_map(std::size_t context_window, std::size_t dim) const {
  FeatureMap fm;
  fm.context_window = context_window;
  fm.dim = dim;
  fm.vocab_size = vocab_.size();
  return fm;
}

std::vector<int> running_values(std::span<const Token> prompt, const Vocab& vocab) {
  std::vector<int> values;
  if (prompt.empty() || !vocab.is_digit(prompt[0])) {
    throw Error(ErrorCode::kInvalidInput, "prompt must start with an operand");
  }
  int acc = prompt[0];
  std::size_t i = 1;
  while (i + 1 < prompt.size() && prompt[i] != vocab.sep()) {
    const Token op = prompt[i];
    const Token arg = prompt[i + 1];
    if (!vocab.is_digit(arg)) throw Error(ErrorCode::kInvalidInput, "operator without operand");
    if (op == vocab.plus()) {
      acc = (acc + arg) % vocab.modulus;
    } else if (op == vocab.times()) {
      acc = (acc * arg) % vocab.modulus;
    } else {
      throw Error(ErrorCode::kInvalidInput, "unknown operator token " + std::to_string(op));
    }
    values.push_back(acc);
    i += 2;
  }
  if (values.empty()) throw Error(ErrorCode::kInvalidInput, "prompt has no operator");
  return values;
}

Task make_task(const TaskSpec& spec) {
  if (spec.family != "modular-arithmetic-chain") {
    throw Error(ErrorCode::kInvalidSpec, "unknown task family '" + spec.family + "'");
  }
  if (spec.modulus < 2) throw Error(ErrorCode::kInvalidSpec, "modulus must be >= 2");
  if (spec.min_chain < 1 || spec.max_chain < spec.min_chain) {
    throw Error(ErrorCode::kInvalidSpec, "chain length range must satisfy 1 <= min <= max");
  }
  if (spec.n_train < 1 || spec.n_eval < 1) throw Error(ErrorCode::kInvalidSpec, "split sizes must be >= 1");

  // Number of distinct prompts: sum over L of m^(L+1) * 2^L. Bail out before
  // the rejection loop below could spin forever.
  const double m = spec.modulus;
  double space = 0.0;
  for (int L = spec.min_chain; L <= spec.max_chain; ++L) space += std::pow(m, L + 1) * std::pow(2.0, L);
  const std::size_t wanted = spec.n_train + spec.n_eval;
  if (space < static_cast<double>(wanted)) {
    throw Error(ErrorCode::kInvalidSpec, "prompt space too small for requested split sizes");
  }

  const Vocab vocab{spec.modulus};
  RngStream rng(spec.seed, Stream::kTask);
  std::set<TokenSeq> seen;
  std::vector<Prompt> prompts;
  prompts.reserve(wanted);
  while (prompts.size() < wanted) {
    const int L = spec.min_chain + static_cast<int>(rng.index(spec.max_chain - spec.min_chain + 1));
    TokenSeq tokens;
    tokens.push_back(vocab.digit(static_cast<int>(rng.index(spec.modulus))));
    for (int i = 0; i < L; ++i) {
      tokens.push_back(rng.index(2) == 0 ? vocab.plus() : vocab.times());
      tokens.push_back(vocab.digit(static_cast<int>(rng.index(spec.modulus))));
    }
    tokens.push_back(vocab.sep());
    if (!seen.insert(tokens).second) continue;
    Prompt p;
    p.id = static_cast<int>(prompts.size());
    p.ground_truth = {vocab.digit(running_values(tokens, vocab).back())};
    p.tokens = std::move(tokens);
    prompts.push_back(std::move(p));
  }
  std::vector<Prompt> eval(prompts.begin() + static_cast<std::ptrdiff_t>(spec.n_train), prompts.end());
  prompts.resize(spec.n_train);
  return Task(spec, std::move(prompts), std::move(eval));
}

std::optional<TokenSeq> extract_answer(std::span<const Token> tokens, const Vocab& vocab) {
  const auto it = std::find(tokens.rbegin(), tokens.rend(), vocab.mark());
  if (it == tokens.rend()) return std::nullopt;
  const auto start = it.base();
  const auto stop = std::find(start, tokens.end(), vocab.end());
  if (start == stop) return std::nullopt;
  return TokenSeq(start, stop);
}

void write_prompts_jsonl(std::ostream& out, std::span<const Prompt> prompts, const Vocab& vocab) {
  for (const auto& p : prompts) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["prompt"] = p.tokens;
    j["ground_truth"] = p.ground_truth;
    j["text"] = vocab.render(p.tokens);
    out << j.dump() << '\n';
  }
}

std::vector<Prompt> read_prompts_jsonl(std::istream& in) {
  std::vector<Prompt> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Prompt p;
    p.id = j.at("id").get<int>();
    p.tokens = j.at("prompt").get<TokenSeq>();
    p.ground_truth = j.at("ground_truth").get<TokenSeq>();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace edo

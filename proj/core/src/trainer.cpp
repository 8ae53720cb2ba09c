#include "edo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "edo/search.hpp"
#include "edo/ttc.hpp"

namespace edo {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool wants(std::span<const std::string> strategies, const char* name) {
  return std::find(strategies.begin(), strategies.end(), name) != strategies.end();
}

std::vector<std::vector<std::size_t>> prompt_minibatches(std::size_t n_prompts, std::size_t batch, std::uint64_t seed,
                                                          std::size_t iteration, std::size_t epoch) {
  std::vector<std::size_t> order(n_prompts);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed, Stream::kMinibatch, iteration, epoch);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
  }
  return out;
}

void check_finite(double loss, const ParamMatrix& grad) {
  if (!std::isfinite(loss) || !grad.all_finite()) throw Error(ErrorCode::kDivergedRun, "non-finite training loss");
}

bool informative(const RolloutGroup& g) {
  return std::any_of(g.advantages.begin(), g.advantages.end(), [](double a) { return a != 0.0; });
}

}  // namespace

SampleOptions rollout_options(const Task& task, std::size_t max_len, double temperature) {
  SampleOptions o;
  o.max_len = max_len;
  o.temperature = temperature;
  o.terminator = task.vocab().end();
  return o;
}

std::vector<RolloutGroup> collect_rollouts(const SoftmaxPolicy& policy, const Task& task,
                                           std::span<const Prompt> prompts, std::size_t n,
                                           const SampleOptions& options, std::uint64_t seed, std::size_t iteration) {
  if (n == 0) throw Error(ErrorCode::kInvalidConfig, "rollouts per prompt must be >= 1");
  std::vector<RolloutGroup> groups;
  groups.reserve(prompts.size());
  for (const auto& p : prompts) {
    RolloutGroup g;
    g.prompt_id = p.id;
    g.prompt = p.tokens;
    g.responses.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      RngStream rng(seed, Stream::kRollout, iteration, static_cast<std::uint64_t>(p.id), j);
      Response r = sample_response(policy, p.id, p.tokens, options, rng);
      task.score(r, p);
      g.responses.push_back(std::move(r));
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<PreferencePair> collect_preference_pairs(std::span<const RolloutGroup> groups, std::size_t s,
                                                     std::uint64_t seed, std::size_t iteration) {
  if (s == 0) throw Error(ErrorCode::kInvalidConfig, "pairs per prompt must be >= 1");
  std::vector<PreferencePair> pairs;
  for (const auto& g : groups) {
    std::vector<std::size_t> winners, losers;
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      (g.responses[i].reward == 1 ? winners : losers).push_back(i);
    }
    if (winners.empty() || losers.empty()) continue;
    RngStream rng(seed, Stream::kPairs, iteration, static_cast<std::uint64_t>(g.prompt_id));
    rng.shuffle(std::span<std::size_t>(winners));
    rng.shuffle(std::span<std::size_t>(losers));
    const std::size_t count = std::min(s, std::lcm(winners.size(), losers.size()));
    for (std::size_t k = 0; k < count; ++k) {
      pairs.push_back({g.prompt_id, g.prompt, g.responses[winners[k % winners.size()]],
                       g.responses[losers[k % losers.size()]]});
    }
  }
  return pairs;
}

double warm_start(SoftmaxPolicy& policy, const Task& task, std::size_t epochs, double learning_rate,
                  std::size_t minibatch_prompts, std::uint64_t seed) {
  const auto& prompts = task.train();
  std::vector<std::vector<TokenSeq>> targets;
  targets.reserve(prompts.size());
  for (const auto& p : prompts) targets.push_back(task.derivations(p));
  Adam adam(policy.weights().size(), AdamOptions{learning_rate});
  ParamMatrix grad(policy.vocab_size(), policy.dim());
  double epoch_nll = 0.0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    RngStream rng(seed, Stream::kInit, epoch);
    std::vector<std::size_t> order(prompts.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    epoch_nll = 0.0;
    std::size_t n_seq = 0;
    for (std::size_t start = 0; start < order.size(); start += minibatch_prompts) {
      const std::size_t stop = std::min(order.size(), start + minibatch_prompts);
      std::size_t batch_seq = 0;
      for (std::size_t j = start; j < stop; ++j) batch_seq += targets[order[j]].size();
      const double scale = -1.0 / static_cast<double>(batch_seq);
      grad.set_zero();
      for (std::size_t j = start; j < stop; ++j) {
        const auto& p = prompts[order[j]];
        for (const auto& y : targets[order[j]]) {
          epoch_nll -= accumulate_logprob_grad(policy, p.tokens, y, scale, grad);
          ++n_seq;
        }
      }
      adam.step(policy.weights().data(), grad.data());
    }
    epoch_nll /= static_cast<double>(std::max<std::size_t>(1, n_seq));
  }
  return epoch_nll;
}

IterationState init_state(const Task& task, const ExperimentConfig& cfg) {
  IterationState state;
  state.policy = SoftmaxPolicy(task.feature_map(cfg.context_window, cfg.feature_dim));
  if (cfg.warmup_epochs > 0) {
    warm_start(state.policy, task, cfg.warmup_epochs, cfg.warmup_lr, cfg.minibatch_prompts, cfg.seed);
  }
  state.ref = state.policy;
  state.prev = state.policy;
  state.optimizer = Adam(state.policy.weights().size(), AdamOptions{cfg.learning_rate});
  return state;
}

IterationLog train_iteration(IterationState& state, const Task& task, const ExperimentConfig& cfg, TrainMode mode) {
  IterationLog log;
  log.iteration = state.iteration + 1;
  log.mode = mode;
  const std::size_t t = log.iteration;
  const bool ed = is_exploration_driven(mode) && cfg.alpha != 0.0;

  // Rollouts come from the end-of-(t-1) policy, which is also the bias
  // term's expectation policy for this iteration.
  state.prev = state.policy;
  const auto options = rollout_options(task, cfg.max_len, cfg.temperature);
  auto groups = collect_rollouts(state.policy, task, task.train(), cfg.rollouts, options, cfg.seed, t);

  std::map<int, std::size_t> group_of;
  for (std::size_t i = 0; i < groups.size(); ++i) group_of[groups[i].prompt_id] = i;

  std::vector<PreferencePair> pairs;
  if (is_grpo(mode)) {
    for (auto& g : groups) {
      assign_advantages(g, cfg.sigma_floor, cfg.advantage_mode());
      log.groups_kept += informative(g) ? 1 : 0;
    }
  } else {
    pairs = collect_preference_pairs(groups, cfg.pairs_per_prompt, cfg.seed, t);
    log.pairs_emitted = pairs.size();
  }
  if (log.pairs_emitted == 0 && log.groups_kept == 0) {
    log.starved = true;
    log.loss = kNaN;
    state.iteration = t;
    state.log.push_back(log);
    return log;
  }

  double loss_sum = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch : prompt_minibatches(groups.size(), cfg.minibatch_prompts, cfg.seed, t, epoch)) {
      LossValueGrad lg;
      if (is_grpo(mode)) {
        std::vector<RolloutGroup> kept;
        for (auto i : batch) {
          if (informative(groups[i])) kept.push_back(groups[i]);
        }
        if (kept.empty()) continue;
        lg = ed ? ed_grpo_loss(state.policy, state.prev, state.ref, kept, cfg.clip(), cfg.alpha, cfg.beta)
                : grpo_loss(state.policy, state.prev, state.ref, kept, cfg.clip(), cfg.beta);
      } else {
        std::vector<PreferencePair> batch_pairs;
        std::vector<BiasSample> samples;
        for (auto i : batch) {
          const int id = groups[i].prompt_id;
          for (const auto& p : pairs) {
            if (p.prompt_id == id) batch_pairs.push_back(p);
          }
          for (const auto& r : groups[i].responses) samples.push_back({groups[i].prompt, r});
        }
        if (batch_pairs.empty()) continue;
        lg = ed ? ed_idpo_loss(state.policy, state.ref, state.prev, batch_pairs, samples, cfg.alpha, cfg.beta)
                : dpo_loss(state.policy, state.ref, batch_pairs, cfg.beta);
      }
      check_finite(lg.value, lg.grad);
      state.optimizer.step(state.policy.weights().data(), lg.grad.data());
      loss_sum += lg.value;
      ++log.steps;
    }
  }
  log.loss = log.steps ? loss_sum / static_cast<double>(log.steps) : kNaN;
  state.iteration = t;
  state.log.push_back(log);
  return log;
}

RewardModel train_reward_model(const SoftmaxPolicy& pi0, const Task& task, const ExperimentConfig& cfg) {
  RewardModel rm(pi0.feature_map());
  const auto options = rollout_options(task, cfg.max_len, 1.0);
  std::vector<RmExample> data;
  for (const auto& p : task.train()) {
    const auto derivs = task.derivations(p);
    for (std::size_t d = 0; d < derivs.size(); ++d) {
      RmExample ex;
      ex.prompt = p.tokens;
      ex.positive = derivs[d];
      for (std::size_t j = 0; j < cfg.rm_negatives; ++j) {
        RngStream rng(cfg.seed, Stream::kRewardModel, static_cast<std::uint64_t>(p.id), d + 1, j);
        ex.negatives.push_back(sample_response(pi0, p.id, p.tokens, options, rng).tokens);
      }
      data.push_back(std::move(ex));
    }
  }
  train_rm(rm, data, cfg.rm_options());
  return rm;
}

EvalResult evaluate_policy(const SoftmaxPolicy& policy, const RewardModel* rm, const Task& task,
                           const ExperimentConfig& cfg, std::span<const std::string> strategies) {
  EvalResult out;
  auto& rec = out.record;
  const auto& prompts = task.eval();
  const auto options = rollout_options(task, cfg.max_len, cfg.eval_temperature);
  const bool need_rm = wants(strategies, "bon") || wants(strategies, "search");
  if (need_rm && rm == nullptr) {
    throw Error(ErrorCode::kMissingDependency, "Best-of-N and search need a trained reward model");
  }

  std::vector<TokenSeq> prompt_tokens;
  for (const auto& p : prompts) prompt_tokens.push_back(p.tokens);
  rec.entropy = mean_policy_entropy(policy, prompt_tokens, cfg.entropy_samples, options, cfg.seed);

  for (const auto& p : prompts) {
    for (std::size_t j = 0; j < cfg.diversity_samples; ++j) {
      RngStream rng(cfg.seed, Stream::kDiversity, static_cast<std::uint64_t>(p.id), j);
      out.diversity_corpus.push_back(sample_response(policy, p.id, p.tokens, options, rng).tokens);
    }
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    try {
      rec.distinct[n - 1] = distinct_n(out.diversity_corpus, n);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInsufficientTokens) throw;
      rec.distinct[n - 1] = kNaN;
    }
  }

  rec.accuracy_greedy = rec.accuracy_sc = rec.accuracy_bon = rec.accuracy_search = kNaN;
  if (wants(strategies, "greedy")) {
    std::vector<DecodeResult> results;
    for (const auto& p : prompts) results.push_back(greedy_decode(policy, task, p, options));
    rec.accuracy_greedy = accuracy(results, prompts, task);
  }
  if (wants(strategies, "sc")) {
    double acc = 0.0;
    for (std::size_t rep = 0; rep < cfg.sc_repeats; ++rep) {
      std::vector<DecodeResult> results;
      for (const auto& p : prompts) {
        RngStream rng(cfg.seed, Stream::kEvalSc, rep, static_cast<std::uint64_t>(p.id));
        results.push_back(self_consistency(policy, task, p, cfg.sc_n, options, rng));
      }
      acc += accuracy(results, prompts, task);
    }
    rec.accuracy_sc = acc / static_cast<double>(cfg.sc_repeats);
  }
  if (wants(strategies, "bon")) {
    std::vector<DecodeResult> results;
    for (const auto& p : prompts) {
      RngStream rng(cfg.seed, Stream::kEvalBon, static_cast<std::uint64_t>(p.id));
      results.push_back(best_of_n(policy, *rm, task, p, cfg.bon_n, options, rng));
    }
    rec.accuracy_bon = accuracy(results, prompts, task);
  }
  if (wants(strategies, "search")) {
    std::size_t correct = 0;
    for (const auto& p : prompts) {
      RngStream rng(cfg.seed, Stream::kSearch, static_cast<std::uint64_t>(p.id));
      const auto res = search(p.tokens, policy, *rm, cfg.search_options(), cfg.max_len, task.vocab().end(), rng);
      correct += static_cast<std::size_t>(task.verify(res.response, p));
    }
    rec.accuracy_search = static_cast<double>(correct) / static_cast<double>(prompts.size());
  }
  return out;
}

void write_training_csv(std::ostream& out, std::span<const MetricsRecord> records, std::span<const IterationLog> log) {
  out << "iteration,mode,loss,entropy,accuracy_greedy,accuracy_sc,accuracy_bon,distinct_4,pairs_emitted,groups_kept\n";
  for (const auto& r : records) {
    double loss = kNaN;
    for (const auto& l : log) {
      if (l.iteration == r.iteration) loss = l.loss;
    }
    out << r.iteration << ',' << r.mode << ',' << format_real(loss) << ',' << format_real(r.entropy) << ','
        << format_real(r.accuracy_greedy) << ',' << format_real(r.accuracy_sc) << ','
        << format_real(r.accuracy_bon) << ',' << format_real(r.distinct[3]) << ',' << r.pairs_emitted << ','
        << r.groups_kept << '\n';
  }
}

RunResult run_training(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  const Task task = make_task(cfg.task_spec());
  const TrainMode mode = cfg.train_mode();
  IterationState state = init_state(task, cfg);

  RunResult result;
  const bool need_rm = wants(cfg.strategies, "bon") || wants(cfg.strategies, "search");
  if (need_rm) result.reward_model = train_reward_model(state.ref, task, cfg);
  const RewardModel* rm = result.reward_model ? &*result.reward_model : nullptr;

  if (!out_dir.empty()) {
    fs::create_directories(fs::path(out_dir) / "checkpoints");
    save_config(cfg, (fs::path(out_dir) / "config.json").string());
    if (rm) save_reward_model(*rm, (fs::path(out_dir) / "reward_model.bin").string());
    save_policy(state.policy, (fs::path(out_dir) / "checkpoints" / "policy_iter_0.bin").string());
  }

  auto record = [&](std::size_t t, const IterationLog* log) {
    MetricsRecord r = evaluate_policy(state.policy, rm, task, cfg, cfg.strategies).record;
    r.iteration = t;
    r.mode = to_string(mode);
    if (log) {
      r.pairs_emitted = log->pairs_emitted;
      r.groups_kept = log->groups_kept;
    }
    result.records.push_back(r);
  };
  record(0, nullptr);
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    const IterationLog log = train_iteration(state, task, cfg, mode);
    record(t, &log);
    if (!out_dir.empty()) {
      save_policy(state.policy,
                  (fs::path(out_dir) / "checkpoints" / ("policy_iter_" + std::to_string(t) + ".bin")).string());
    }
  }
  result.log = state.log;
  result.final_policy = state.policy;

  if (!out_dir.empty()) {
    std::ofstream csv(fs::path(out_dir) / "metrics.csv");
    write_training_csv(csv, result.records, result.log);
    std::ofstream full(fs::path(out_dir) / "metrics_full.csv");
    write_metrics_csv(full, result.records);
    std::ofstream report(fs::path(out_dir) / "report.json");
    write_report_json(report, assemble_report(result.records));
    if (!csv || !full || !report) throw Error(ErrorCode::kIo, "failed writing run outputs to " + out_dir);
  }
  return result;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, std::span<const double> alphas) {
  if (alphas.empty()) throw Error(ErrorCode::kInvalidConfig, "config key 'sweep_alphas': grid is empty");
  std::vector<SweepRow> rows;
  for (double a : alphas) {
    ExperimentConfig c = cfg;
    c.alpha = a;
    rows.push_back({a, run_training(c, "").records.back()});
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "alpha,mode,entropy,accuracy_greedy,accuracy_sc,accuracy_bon,distinct_4\n";
  for (const auto& row : rows) {
    const auto& r = row.final_record;
    out << format_real(row.alpha) << ',' << r.mode << ',' << format_real(r.entropy) << ','
        << format_real(r.accuracy_greedy) << ',' << format_real(r.accuracy_sc) << ',' << format_real(r.accuracy_bon)
        << ',' << format_real(r.distinct[3]) << '\n';
  }
}

}  // namespace edo

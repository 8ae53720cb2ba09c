// edolab: train, evaluate, and inspect exploration-driven post-training runs.
//
// Exit codes: 0 success, 1 failed check or runtime error, 2 configuration error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "edo/config.hpp"
#include "edo/gradcheck.hpp"
#include "edo/metrics.hpp"
#include "edo/search.hpp"
#include "edo/trainer.hpp"
#include "edo/ttc.hpp"

namespace fs = std::filesystem;
using namespace edo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  std::string strategies;
  std::optional<double> alpha;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_out = true) {
  cmd->add_option("--config", f.config, "JSON config file (defaults apply when omitted)");
  cmd->add_option("--seed", f.seed, "Override the config seed");
  if (with_out) cmd->add_option("--out", f.out, "Output directory (overrides out_dir)");
  cmd->add_option("--mode", f.mode, "idpo, ed-idpo, grpo, or ed-grpo")
      ->check(CLI::IsMember({"idpo", "ed-idpo", "grpo", "ed-grpo"}));
  cmd->add_option("--strategies", f.strategies, "Comma-separated subset of greedy,sc,bon,search");
  cmd->add_option("--alpha", f.alpha, "Override the exploration coefficient");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.mode.empty()) cfg.mode = f.mode;
  if (!f.strategies.empty()) cfg.strategies = split_list(f.strategies);
  if (f.alpha) cfg.alpha = *f.alpha;
  cfg.validate();
  return cfg;
}

void print_record(const MetricsRecord& r) {
  std::printf("iter %zu  %-8s entropy %.4f  greedy %s  sc %s  bon %s  search %s  dist4 %s\n", r.iteration,
              r.mode.c_str(), r.entropy, format_real(r.accuracy_greedy).c_str(), format_real(r.accuracy_sc).c_str(),
              format_real(r.accuracy_bon).c_str(), format_real(r.accuracy_search).c_str(),
              format_real(r.distinct[3]).c_str());
}

int cmd_train(const CommonFlags& f) {
  const ExperimentConfig cfg = resolve(f);
  const RunResult run = run_training(cfg, cfg.out_dir);
  for (const auto& r : run.records) print_record(r);
  for (const auto& l : run.log) {
    if (l.starved) std::printf("iter %zu  StarvedIteration\n", l.iteration);
  }
  std::printf("run directory: %s\n", cfg.out_dir.c_str());
  return kExitOk;
}

// One JSON line per (prompt, strategy) with the pool's answer histogram.
void write_eval_rows(std::ostream& out, const SoftmaxPolicy& policy, const RewardModel* rm, const Task& task,
                     const ExperimentConfig& cfg) {
  const auto options = rollout_options(task, cfg.max_len, cfg.eval_temperature);
  auto row = [&](const Prompt& p, const std::string& strategy, const DecodeResult& d, std::size_t rep) {
    std::map<std::string, std::size_t> hist;
    for (const auto& c : d.pool) hist[c.response.answer ? task.vocab().render(*c.response.answer) : "<none>"]++;
    nlohmann::ordered_json j;
    j["prompt_id"] = p.id;
    j["strategy"] = strategy;
    j["repeat"] = rep;
    j["n"] = d.pool_size();
    j["winning_answer"] = d.winning_answer ? nlohmann::json(task.vocab().render(*d.winning_answer)) : nlohmann::json(nullptr);
    j["correct"] = task.verify(d.chosen().tokens, p) == 1;
    j["pool_answers"] = hist;
    out << j.dump() << '\n';
  };
  for (const auto& s : cfg.strategies) {
    const Strategy strategy = parse_strategy(s);
    for (const auto& p : task.eval()) {
      if (strategy == Strategy::kGreedy) {
        row(p, s, greedy_decode(policy, task, p, options), 0);
      } else if (strategy == Strategy::kSelfConsistency) {
        for (std::size_t rep = 0; rep < cfg.sc_repeats; ++rep) {
          RngStream rng(cfg.seed, Stream::kEvalSc, rep, static_cast<std::uint64_t>(p.id));
          row(p, s, self_consistency(policy, task, p, cfg.sc_n, options, rng), rep);
        }
      } else if (strategy == Strategy::kBestOfN) {
        RngStream rng(cfg.seed, Stream::kEvalBon, static_cast<std::uint64_t>(p.id));
        row(p, s, best_of_n(policy, *rm, task, p, cfg.bon_n, options, rng), 0);
      }
    }
  }
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, const std::string& rm_path) {
  const ExperimentConfig cfg = resolve(f);
  const Task task = make_task(cfg.task_spec());
  const SoftmaxPolicy policy = load_policy(checkpoint);
  if (policy.feature_map() != task.feature_map(cfg.context_window, cfg.feature_dim)) {
    throw Error(ErrorCode::kInvalidConfig, "checkpoint feature map does not match the config");
  }
  std::optional<RewardModel> rm;
  if (!rm_path.empty()) rm = load_reward_model(rm_path);
  const RewardModel* rmp = rm ? &*rm : nullptr;

  MetricsRecord rec = evaluate_policy(policy, rmp, task, cfg, cfg.strategies).record;
  rec.mode = "eval";
  fs::create_directories(cfg.out_dir);
  const std::vector<MetricsRecord> records{rec};
  std::ofstream csv(fs::path(cfg.out_dir) / "eval_metrics.csv");
  write_metrics_csv(csv, records);
  std::ofstream report(fs::path(cfg.out_dir) / "eval_report.json");
  write_report_json(report, assemble_report(records));
  std::ofstream rows(fs::path(cfg.out_dir) / "eval_rows.jsonl");
  write_eval_rows(rows, policy, rmp, task, cfg);
  print_record(rec);
  return kExitOk;
}

int cmd_sweep(const CommonFlags& f, bool strict) {
  const ExperimentConfig cfg = resolve(f);
  const auto rows = run_sweep(cfg, cfg.sweep_alphas);
  fs::create_directories(cfg.out_dir);
  std::ofstream csv(fs::path(cfg.out_dir) / "sweep.csv");
  write_sweep_csv(csv, rows);
  write_sweep_csv(std::cout, rows);

  std::vector<double> alphas, dist4;
  for (const auto& r : rows) {
    alphas.push_back(r.alpha);
    dist4.push_back(r.final_record.distinct[3]);
  }
  const double rho = rows.size() >= 2 ? spearman(alphas, dist4) : 0.0;
  const bool pass = rho >= 0.8;
  std::printf("distinct_4 trend: spearman %s -> %s\n", format_real(rho).c_str(), pass ? "PASS" : "FAIL");
  return (strict && !pass) ? kExitFailed : kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t instances, double corrupt) {
  GradcheckOptions o;
  o.seed = seed;
  o.instances = instances;
  o.corrupt = corrupt;
  const auto start = std::chrono::steady_clock::now();
  const auto results = run_gradcheck(o);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool all = true;
  for (const auto& name : gradcheck_losses()) {
    double worst = 0.0;
    std::size_t failed = 0, n = 0;
    for (const auto& r : results) {
      if (r.loss != name) continue;
      worst = std::max(worst, r.rel_error);
      failed += r.passed ? 0 : 1;
      ++n;
    }
    all = all && failed == 0;
    std::printf("%-10s %zu instances  max rel err %.3e  %s\n", name.c_str(), n, worst, failed ? "FAIL" : "PASS");
  }
  std::printf("runtime %.2f s\n", secs);
  return all ? kExitOk : kExitFailed;
}

int cmd_search_trace(const CommonFlags& f, const std::string& checkpoint, const std::string& rm_path, int prompt_id) {
  const ExperimentConfig cfg = resolve(f);
  const Task task = make_task(cfg.task_spec());
  const SoftmaxPolicy policy = checkpoint.empty() ? init_state(task, cfg).policy : load_policy(checkpoint);
  const RewardModel rm = rm_path.empty() ? train_reward_model(policy, task, cfg) : load_reward_model(rm_path);
  fs::create_directories(cfg.out_dir);
  std::size_t correct = 0, count = 0;
  for (const auto& p : task.eval()) {
    if (prompt_id >= 0 && p.id != prompt_id) continue;
    RngStream rng(cfg.seed, Stream::kSearch, static_cast<std::uint64_t>(p.id));
    const auto res = search(p.tokens, policy, rm, cfg.search_options(), cfg.max_len, task.vocab().end(), rng);
    std::ofstream out(fs::path(cfg.out_dir) / ("search_trace_" + std::to_string(p.id) + ".jsonl"));
    write_search_trace(out, res.trace);
    const int ok = task.verify(res.response, p);
    correct += static_cast<std::size_t>(ok);
    ++count;
    std::printf("prompt %d  %s -> %s  %s  (%zu iterations, %zu nodes)\n", p.id, task.vocab().render(p.tokens).c_str(),
                task.vocab().render(res.response).c_str(), ok ? "correct" : "wrong", res.iterations, res.tree.size());
  }
  if (count == 0) throw Error(ErrorCode::kInvalidConfig, "no eval prompt with id " + std::to_string(prompt_id));
  std::printf("search accuracy %zu/%zu\n", correct, count);
  return kExitOk;
}

int cmd_report(const std::string& run_dir) {
  std::ifstream in(fs::path(run_dir) / "metrics_full.csv");
  if (!in) throw Error(ErrorCode::kIo, "no metrics_full.csv in " + run_dir);
  const auto records = read_metrics_csv(in);
  const auto rows = assemble_report(records);
  std::ofstream out(fs::path(run_dir) / "report.json");
  write_report_json(out, rows);
  std::printf("%-5s %-8s %-8s %-16s %-16s %-16s %-8s\n", "iter", "mode", "greedy", "sc (delta)", "bon (delta)",
              "search (delta)", "dist4");
  for (const auto& r : rows) {
    auto cell = [](double acc, double delta) { return format_real(acc) + " (" + format_real(delta) + ")"; };
    std::printf("%-5zu %-8s %-8s %-16s %-16s %-16s %-8s\n", r.record.iteration, r.record.mode.c_str(),
                format_real(r.record.accuracy_greedy).c_str(), cell(r.record.accuracy_sc, r.delta_sc).c_str(),
                cell(r.record.accuracy_bon, r.delta_bon).c_str(),
                cell(r.record.accuracy_search, r.delta_search).c_str(), format_real(r.record.distinct[3]).c_str());
  }
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kInvalidSpec:
    case ErrorCode::kMissingDependency:
      return kExitConfig;
    default:
      return kExitFailed;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exploration-driven post-training laboratory"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, sweep_f, trace_f;
  auto* train = app.add_subcommand("train", "Run the iterative training pipeline");
  add_common(train, train_f);

  auto* eval = app.add_subcommand("eval", "Evaluate a policy checkpoint");
  add_common(eval, eval_f);
  std::string eval_ckpt, eval_rm;
  eval->add_option("--checkpoint", eval_ckpt, "Policy checkpoint")->required();
  eval->add_option("--reward-model", eval_rm, "Reward model checkpoint (needed for bon)");

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over the sweep_alphas grid");
  add_common(sweep, sweep_f);
  bool strict = false;
  sweep->add_flag("--strict", strict, "Exit 1 when the distinct-4 trend check fails");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  std::uint64_t grad_seed = 0;
  std::size_t grad_instances = 20;
  double grad_corrupt = 0.0;
  grad->add_option("--seed", grad_seed, "Instance seed");
  grad->add_option("--instances", grad_instances, "Randomized instances per loss");
  grad->add_option("--corrupt", grad_corrupt, "Perturb one analytic entry (negative control)");

  auto* trace = app.add_subcommand("search-trace", "Run tree search on eval prompts and dump traces");
  add_common(trace, trace_f);
  std::string trace_ckpt, trace_rm;
  int trace_prompt = -1;
  trace->add_option("--checkpoint", trace_ckpt, "Policy checkpoint (default: the warm-started initial policy)");
  trace->add_option("--reward-model", trace_rm, "Reward model checkpoint (default: trained from the policy)");
  trace->add_option("--prompt-id", trace_prompt, "Restrict to one eval prompt id");

  auto* report = app.add_subcommand("report", "Rebuild the accuracy/delta report of a run directory");
  std::string report_dir;
  report->add_option("--out", report_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_f);
    if (*eval) return cmd_eval(eval_f, eval_ckpt, eval_rm);
    if (*sweep) return cmd_sweep(sweep_f, strict);
    if (*grad) return cmd_gradcheck(grad_seed, grad_instances, grad_corrupt);
    if (*trace) return cmd_search_trace(trace_f, trace_ckpt, trace_rm, trace_prompt);
    if (*report) return cmd_report(report_dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "edolab: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "edolab: %s\n", e.what());
    return kExitFailed;
  }
  return kExitOk;
}

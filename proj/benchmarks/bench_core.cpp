#include <benchmark/benchmark.h>

#include "edo/losses.hpp"
#include "edo/search.hpp"
#include "edo/trainer.hpp"

namespace edo {
namespace {

// The default experiment: task, warm-started policy, and one round of rollouts.
struct Setup {
  ExperimentConfig cfg;
  Task task = make_task(cfg.task_spec());
  IterationState state = init_state(task, cfg);
  SampleOptions opts = rollout_options(task, cfg.max_len, cfg.temperature);
  std::vector<RolloutGroup> groups = [this] {
    auto g = collect_rollouts(state.policy, task, task.train(), cfg.rollouts, opts, cfg.seed, 1);
    for (auto& grp : g) assign_advantages(grp, cfg.sigma_floor);
    return g;
  }();

  static const Setup& get() {
    static const Setup s;
    return s;
  }
};

void BM_SampleResponse(benchmark::State& st) {
  const auto& s = Setup::get();
  RngStream rng(1);
  const auto& p = s.task.train().front();
  for (auto _ : st) benchmark::DoNotOptimize(sample_response(s.state.policy, p.id, p.tokens, s.opts, rng));
}
BENCHMARK(BM_SampleResponse);

void BM_CollectRollouts(benchmark::State& st) {
  const auto& s = Setup::get();
  std::size_t it = 0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(
        collect_rollouts(s.state.policy, s.task, s.task.train(), s.cfg.rollouts, s.opts, s.cfg.seed, ++it));
  }
}
BENCHMARK(BM_CollectRollouts)->Unit(benchmark::kMillisecond);

void BM_GrpoLoss(benchmark::State& st) {
  const auto& s = Setup::get();
  const std::span<const RolloutGroup> batch(s.groups.data(), s.cfg.minibatch_prompts);
  for (auto _ : st) {
    benchmark::DoNotOptimize(grpo_loss(s.state.policy, s.state.prev, s.state.ref, batch, ClipRange{}, s.cfg.beta));
  }
}
BENCHMARK(BM_GrpoLoss)->Unit(benchmark::kMicrosecond);

void BM_EdGrpoLoss(benchmark::State& st) {
  const auto& s = Setup::get();
  const std::span<const RolloutGroup> batch(s.groups.data(), s.cfg.minibatch_prompts);
  for (auto _ : st) {
    benchmark::DoNotOptimize(
        ed_grpo_loss(s.state.policy, s.state.prev, s.state.ref, batch, ClipRange{}, s.cfg.alpha, s.cfg.beta));
  }
}
BENCHMARK(BM_EdGrpoLoss)->Unit(benchmark::kMicrosecond);

void BM_EdIdpoLoss(benchmark::State& st) {
  const auto& s = Setup::get();
  const auto pairs = collect_preference_pairs(s.groups, s.cfg.pairs_per_prompt, s.cfg.seed, 1);
  std::vector<BiasSample> samples;
  for (const auto& g : s.groups) {
    for (const auto& r : g.responses) samples.push_back({g.prompt, r});
  }
  for (auto _ : st) {
    benchmark::DoNotOptimize(
        ed_idpo_loss(s.state.policy, s.state.ref, s.state.prev, pairs, samples, s.cfg.alpha, s.cfg.beta));
  }
}
BENCHMARK(BM_EdIdpoLoss)->Unit(benchmark::kMicrosecond);

void BM_TrainIteration(benchmark::State& st) {
  const auto& s = Setup::get();
  for (auto _ : st) {
    st.PauseTiming();
    IterationState state = init_state(s.task, s.cfg);
    st.ResumeTiming();
    benchmark::DoNotOptimize(train_iteration(state, s.task, s.cfg, TrainMode::kEdGrpo));
  }
}
BENCHMARK(BM_TrainIteration)->Unit(benchmark::kMillisecond);

void BM_KernelAbsorb(benchmark::State& st) {
  const auto d = static_cast<std::size_t>(st.range(0));
  RngStream rng(3);
  std::vector<std::vector<double>> phis(256, std::vector<double>(d));
  for (auto& phi : phis) {
    for (auto& x : phi) x = rng.normal();
  }
  for (auto _ : st) {
    KernelMemory m(d);
    for (const auto& phi : phis) m.absorb(phi);
    benchmark::DoNotOptimize(m.posterior_variance(phis.front()));
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * phis.size()));
}
BENCHMARK(BM_KernelAbsorb)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TreeSearch(benchmark::State& st) {
  const auto& s = Setup::get();
  static const RewardModel rm = train_reward_model(s.state.ref, s.task, s.cfg);
  SearchOptions o;
  o.max_iterations = static_cast<std::size_t>(st.range(0));
  const auto& p = s.task.eval().front();
  for (auto _ : st) {
    RngStream rng(5);
    benchmark::DoNotOptimize(search(p.tokens, s.state.policy, rm, o, s.cfg.max_len, s.task.vocab().end(), rng));
  }
}
BENCHMARK(BM_TreeSearch)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace edo

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "tsc/convergence.hpp"
#include "tsc/network.hpp"
#include "tsc/oracle.hpp"
#include "tsc/qlearn.hpp"
#include "tsc/rng.hpp"

namespace {

void BM_QUpdate(benchmark::State& state) {
  tsc::QTable table(1, 81, 3, 1.0);
  const tsc::DiscountFactor discount(0.9);
  int s = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsc::q_update(table, s, 1, 2.5, (s + 7) % 81, 0.05, discount));
    s = (s + 1) % 81;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_QUpdate);

void BM_UcbSelection(benchmark::State& state) {
  tsc::QTable table(1, 81, 3, 0.0);
  tsc::VisitCounters visits(81, 3);
  for (int s = 0; s < 81; ++s)
    for (int a = 0; a < 3; ++a)
      for (int k = 0; k < 5; ++k) visits.record(s, a);
  int s = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsc::select_action_ucb(table, s, visits));
    s = (s + 1) % 81;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_UcbSelection);

void BM_MarlEpisode(benchmark::State& state) {
  const tsc::TrafficNetwork net = tsc::build_three_junction_example();
  tsc::EpisodeConfig config;
  config.cycles = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        tsc::run_marl_episode(net, tsc::build_tables(net, 3), config, tsc::RngStream(5)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MarlEpisode)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_QLearningOnMdp(benchmark::State& state) {
  tsc::RngStream rng(9);
  const tsc::ExplicitMDP mdp = tsc::random_mdp(20, 3, 0.9, rng);
  tsc::MdpLearnConfig config;
  config.updates = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsc::q_learning_on_mdp(mdp, config, tsc::RngStream(10)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QLearningOnMdp)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace

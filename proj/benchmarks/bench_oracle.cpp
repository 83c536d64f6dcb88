#include <benchmark/benchmark.h>

#include "tsc/network.hpp"
#include "tsc/oracle.hpp"
#include "tsc/rng.hpp"

namespace {

tsc::ExplicitMDP make_mdp(int n_states, double discount) {
  tsc::RngStream rng(7);
  return tsc::random_mdp(n_states, 3, discount, rng);
}

void BM_BellmanSweep(benchmark::State& state) {
  const tsc::ExplicitMDP mdp = make_mdp(static_cast<int>(state.range(0)), 0.9);
  tsc::ValueVector j(mdp.n_states, 0.0);
  for (auto _ : state) {
    j = tsc::bellman_T(mdp, j);
    benchmark::DoNotOptimize(j.data());
  }
  state.SetItemsProcessed(state.iterations() * mdp.n_states);
}
BENCHMARK(BM_BellmanSweep)->Arg(20)->Arg(100)->Arg(400);

void BM_ValueIteration(benchmark::State& state) {
  const tsc::ExplicitMDP mdp = make_mdp(static_cast<int>(state.range(0)), 0.9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsc::value_iteration(mdp, 1e-8));
  }
}
BENCHMARK(BM_ValueIteration)->Arg(20)->Arg(100);

void BM_SolveQStar(benchmark::State& state) {
  const tsc::ExplicitMDP mdp = make_mdp(static_cast<int>(state.range(0)), 0.9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsc::solve_q_star(mdp, 1e-8));
  }
}
BENCHMARK(BM_SolveQStar)->Arg(20)->Arg(100);

void BM_MdpFromNetwork(benchmark::State& state) {
  const tsc::TrafficNetwork net = tsc::build_single_junction(2, 0.2, 0.5, 40);
  tsc::MdpBuildOptions options;
  options.samples_per_pair = static_cast<int>(state.range(0));
  options.keep_cost_samples = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        tsc::mdp_from_network(net, 1, tsc::DiscountFactor(0.9), options, tsc::RngStream(11)));
  }
  state.SetItemsProcessed(state.iterations() * 18 * 3 * state.range(0));
}
BENCHMARK(BM_MdpFromNetwork)->Arg(20)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

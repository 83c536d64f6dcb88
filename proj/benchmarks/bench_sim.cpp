#include <benchmark/benchmark.h>

#include "tsc/network.hpp"
#include "tsc/rng.hpp"
#include "tsc/sim.hpp"

namespace {

void BM_AdvanceCycleExample(benchmark::State& state) {
  const tsc::TrafficNetwork net = tsc::build_three_junction_example();
  tsc::Simulation sim(net, tsc::RngStream(1));
  const tsc::GreenSchedule schedule = tsc::GreenSchedule::uniform(net, 20.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sim.advance_cycle(schedule));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_AdvanceCycleExample);

void BM_AdvanceCycleSingleJunction(benchmark::State& state) {
  const int lanes = static_cast<int>(state.range(0));
  const tsc::TrafficNetwork net = tsc::build_single_junction(lanes, 0.2, 0.5, 40);
  tsc::Simulation sim(net, tsc::RngStream(2));
  const tsc::GreenSchedule schedule = tsc::GreenSchedule::uniform(net, 20.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sim.advance_cycle(schedule));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_AdvanceCycleSingleJunction)->Arg(2)->Arg(4)->Arg(8);

void BM_PoissonArrivals(benchmark::State& state) {
  tsc::RngStream rng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsc::sample_poisson_arrivals(0.2, 30.0, rng));
  }
}
BENCHMARK(BM_PoissonArrivals);

}  // namespace

BENCHMARK_MAIN();

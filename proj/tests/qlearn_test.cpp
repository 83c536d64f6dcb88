#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "tsc/qlearn.hpp"

using namespace tsc;

TEST_SUITE("qlearn") {

TEST_CASE("discount factor must lie strictly between zero and one") {
  CHECK(DiscountFactor(0.9).value == 0.9);
  CHECK(DiscountFactor(1e-9).value == 1e-9);
  CHECK_THROWS_AS(DiscountFactor(0.0), std::invalid_argument);
  CHECK_THROWS_AS(DiscountFactor(1.0), std::invalid_argument);
  CHECK_THROWS_AS(DiscountFactor(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(DiscountFactor(1.5), std::invalid_argument);
}

TEST_CASE("table accessors, argmin ties and norm") {
  QTable t(1, 2, 3);
  CHECK(t.values.size() == 6);
  t.at(0, 0) = 5.0;
  t.at(0, 1) = 5.0;
  t.at(0, 2) = 7.0;
  t.at(1, 1) = -8.0;
  CHECK(t.argmin_action(0) == 0);
  CHECK(t.argmin_action(1) == 1);
  CHECK(t.min_over_actions(1) == -8.0);
  CHECK(t.inf_norm() == 8.0);
  CHECK_THROWS_AS(t.at(2, 0), std::out_of_range);
  CHECK_THROWS_AS(t.at(0, 3), std::out_of_range);
  CHECK_THROWS_AS(t.at(-1, 0), std::out_of_range);

  const QTable filled(4, 2, 2, 1.5);
  for (double v : filled.values) CHECK(v == 1.5);
  CHECK(greedy_policy(t) == std::vector<int>{0, 1});
}

TEST_CASE("update is the exact convex combination") {
  RngStream rng(3);
  const DiscountFactor beta(0.9);
  for (int trial = 0; trial < 500; ++trial) {
    QTable t(1, 4, 3);
    for (double& v : t.values) v = rng.uniform01() * 20 - 10;
    const int s = rng.uniform_int(0, 3);
    const int a = rng.uniform_int(0, 2);
    const int s2 = rng.uniform_int(0, 3);
    const double c = rng.uniform01() * 6;
    const double g = 1.0 / rng.uniform_int(1, 50);

    const double old = t.at(s, a);
    const double expected = (1.0 - g) * old + g * (c + beta.value * t.min_over_actions(s2));
    const double got = q_update(t, s, a, c, s2, g, beta);
    CHECK(got == expected);
    CHECK(t.at(s, a) == expected);
  }
}

TEST_CASE("update with a full step lands exactly on the target") {
  QTable t(1, 2, 2);
  t.at(1, 0) = 4.0;
  t.at(1, 1) = 3.0;
  const double after = q_update(t, 0, 1, 2.0, 1, 1.0, DiscountFactor(0.5));
  CHECK(after == 2.0 + 0.5 * 3.0);
}

TEST_CASE("update rejects bad steps and states") {
  QTable t(1, 2, 2);
  const DiscountFactor beta(0.9);
  CHECK_THROWS_AS(q_update(t, 0, 0, 1.0, 0, 0.0, beta), std::invalid_argument);
  CHECK_THROWS_AS(q_update(t, 0, 0, 1.0, 0, -0.5, beta), std::invalid_argument);
  CHECK_THROWS_AS(q_update(t, 0, 0, 1.0, 0, 1.5, beta), std::invalid_argument);
  CHECK_THROWS_AS(q_update(t, 0, 0, 1.0, 2, 0.5, beta), std::out_of_range);
  CHECK_THROWS_AS(q_update(t, 5, 0, 1.0, 0, 0.5, beta), std::out_of_range);
}

TEST_CASE("step schedules evaluate and round-trip through text") {
  const StepSchedule h = StepSchedule::harmonic();
  CHECK(h.at(0) == 1.0);
  CHECK(h.at(1) == 0.5);
  CHECK(h.at(9) == doctest::Approx(0.1));
  CHECK(StepSchedule::harmonic(5).at(0) == 0.2);

  const StepSchedule p = StepSchedule::polynomial(0.6);
  CHECK(p.at(0) == 1.0);
  CHECK(p.at(3) == doctest::Approx(std::pow(4.0, -0.6)));

  const StepSchedule c = StepSchedule::constant_rate(0.1);
  CHECK(c.at(0) == 0.1);
  CHECK(c.at(1000000) == 0.1);

  CHECK_THROWS_AS(h.at(-1), std::invalid_argument);
  CHECK_THROWS_AS(StepSchedule::harmonic(0), std::invalid_argument);

  CHECK(h.to_text() == "harmonic 1");
  CHECK(p.to_text() == "polynomial 0.6");
  CHECK(c.to_text() == "constant 0.1");
  for (const auto* text : {"harmonic 1", "harmonic 2.5", "polynomial 0.6", "constant 0.05"}) {
    const StepSchedule s = StepSchedule::from_text(text);
    CHECK(s.to_text() == text);
    CHECK(StepSchedule::from_text(s.to_text()).at(7) == s.at(7));
  }
  CHECK_THROWS_AS(StepSchedule::from_text("harmonic"), std::invalid_argument);
  CHECK_THROWS_AS(StepSchedule::from_text("linear 1"), std::invalid_argument);
  CHECK_THROWS_AS(StepSchedule::from_text("harmonic one"), std::invalid_argument);
}

TEST_CASE("epsilon decays exponentially down to its floor") {
  const EpsilonGreedy e{1.0, 1e-3, 0.01};
  CHECK(e.at(0) == 1.0);
  CHECK(e.at(1000) == doctest::Approx(std::exp(-1.0)));
  CHECK(e.at(10000000) == 0.01);
  CHECK_THROWS_AS(e.at(-1), std::invalid_argument);

  const EpsilonGreedy frozen{1.0, 0.0, 1.0};
  CHECK(frozen.at(0) == 1.0);
  CHECK(frozen.at(123456) == 1.0);
}

TEST_CASE("epsilon-greedy selection") {
  QTable t(1, 1, 4);
  t.at(0, 2) = -1.0;
  RngStream rng(17);
  for (int i = 0; i < 20; ++i) CHECK(select_action_epsilon(t, 0, 0.0, rng) == 2);

  std::vector<int> picks(4, 0);
  const int n = 8000;
  for (int i = 0; i < n; ++i) picks[select_action_epsilon(t, 0, 1.0, rng)] += 1;
  for (int a = 0; a < 4; ++a) {
    const double se = std::sqrt(0.25 * 0.75 * n);
    CHECK(std::abs(picks[a] - n / 4.0) < 4 * se);
  }
}

TEST_CASE("confidence-based selection prefers untried then high-bonus actions") {
  QTable t(1, 1, 2);
  t.at(0, 0) = 1.0;
  t.at(0, 1) = 2.0;
  VisitCounters v(1, 2);

  CHECK(select_action_ucb(t, 0, v) == 0);
  v.pair[0] = 10;
  CHECK(select_action_ucb(t, 0, v) == 1);

  v.state[0] = 11;
  v.pair[1] = 1;
  // scores: -1 + ln(11)/10 and -2 + ln(11); the rarely tried action wins
  CHECK(select_action_ucb(t, 0, v) == 1);

  v.pair[1] = 100;
  v.state[0] = 110;
  // now both bonuses are tiny and the cheaper action wins
  CHECK(select_action_ucb(t, 0, v) == 0);
}

TEST_CASE("visit counters track states and pairs together") {
  VisitCounters v(3, 2);
  v.record(1, 0);
  v.record(1, 1);
  v.record(1, 1);
  CHECK(v.state_visits(1) == 3);
  CHECK(v.pair_visits(1, 0) == 1);
  CHECK(v.pair_visits(1, 1) == 2);
  CHECK(v.state_visits(0) == 0);
}

TEST_CASE("trace parsing replays table norms") {
  TrainingTrace trace;
  trace.rows.push_back({0, 1, 0, 0, 0.0, 1, 1.0, 0.0, -3.0, 0.0});
  trace.rows.push_back({1, 1, 1, 1, 0.0, 0, 0.5, 0.0, 2.0, 0.0});
  trace.rows.push_back({2, 1, 0, 0, 0.0, 0, 0.25, -3.0, 1.0, 0.0});
  const std::string text = serialize_trace(trace);
  CHECK(text.substr(0, text.find('\n')) ==
        "t,junction,state,action,cost,next_state,gamma,q_before,q_after");

  const TrainingTrace parsed = parse_trace(text, {QTable(1, 2, 2)});
  REQUIRE(parsed.rows.size() == 3);
  CHECK(parsed.rows[0].q_norm_after == 3.0);
  CHECK(parsed.rows[1].q_norm_after == 3.0);
  CHECK(parsed.rows[2].q_norm_after == 2.0);
  CHECK(parsed.rows[1].gamma == 0.5);
  CHECK(parsed.rows[2].q_before == -3.0);
}

TEST_CASE("trace parsing rejects malformed input") {
  CHECK_THROWS_AS(parse_trace("nonsense\n", {QTable(1, 2, 2)}), std::invalid_argument);
  const std::string header = trace_csv_header() + "\n";
  CHECK_THROWS_AS(parse_trace(header + "0,1,0\n", {QTable(1, 2, 2)}), std::invalid_argument);
  CHECK_THROWS_AS(parse_trace(header + "0,9,0,0,1,0,1,0,1\n", {QTable(1, 2, 2)}),
                  std::invalid_argument);
}

TEST_CASE("table snapshots round-trip bit for bit") {
  QTable t(2, 3, 2);
  RngStream rng(29);
  for (double& v : t.values) v = (rng.uniform01() - 0.5) * 1e3;
  t.values[3] = 0.1;
  t.values[4] = 4.9406564584124654e-324;

  const std::vector<double> durations{10, 20};
  const std::string text =
      serialize_qtable(t, 3, 3, durations, DiscountFactor(0.9), StepSchedule::harmonic());
  CHECK(text.substr(0, text.find('\n')) == "tsc-qtable v1");
  CHECK_THROWS_AS(serialize_qtable(t, 3, 3, {10, 20, 30}, DiscountFactor(0.9), StepSchedule::harmonic()),
                  std::invalid_argument);

  const QTableSnapshot snap = parse_qtable(text);
  CHECK(snap.table.junction == 2);
  CHECK(snap.table.n_states == 3);
  CHECK(snap.table.n_actions == 2);
  CHECK(snap.table.values == t.values);
  CHECK(snap.lanes == 3);
  CHECK(snap.phases == 3);
  CHECK(snap.action_durations == durations);
  CHECK(snap.discount == 0.9);
  CHECK(snap.schedule.to_text() == "harmonic 1");

  CHECK_THROWS_AS(parse_qtable("not a snapshot"), std::invalid_argument);
  CHECK_THROWS_AS(parse_qtable("tsc-qtable v1\njunction 1\n"), std::invalid_argument);
}

TEST_CASE("episode rejects inconsistent configuration") {
  const TrafficNetwork net = build_three_junction_example();
  EpisodeConfig config;
  config.cycles = 1;

  auto tables = build_tables(net, 3);
  tables[0].junction = 9;
  CHECK_THROWS_AS(run_marl_episode(net, tables, config, RngStream(1)), std::invalid_argument);

  tables = build_tables(net, 2);
  CHECK_THROWS_AS(run_marl_episode(net, tables, config, RngStream(1)), std::invalid_argument);

  EpisodeConfig no_actions = config;
  no_actions.action_durations.clear();
  CHECK_THROWS_AS(run_marl_episode(net, build_tables(net, 3), no_actions, RngStream(1)),
                  std::invalid_argument);

  EpisodeConfig bad_thresholds = config;
  bad_thresholds.d2 = bad_thresholds.d1;
  CHECK_THROWS_AS(run_marl_episode(net, build_tables(net, 3), bad_thresholds, RngStream(1)),
                  std::invalid_argument);
}

TEST_CASE("episode trace obeys the control protocol") {
  const TrafficNetwork net = build_three_junction_example();
  EpisodeConfig config;
  config.cycles = 40;
  long reports = 0;
  config.on_cycle = [&](const CycleReport&) { reports += 1; };

  const EpisodeResult result = run_marl_episode(net, build_tables(net, 3), config, RngStream(11));

  CHECK(reports == 40);
  REQUIRE(result.trace.rows.size() == 40 * 3);
  REQUIRE(result.tables.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(result.tables[i].junction == static_cast<int>(i) + 1);
    CHECK(result.tables[i].n_states == 81);
    CHECK(result.tables[i].n_actions == 3);
    CHECK(result.visits[i].state_visits(0) >= 0);
    long pair_total = 0;
    for (long c : result.visits[i].pair) pair_total += c;
    CHECK(pair_total == 40);
  }

  double cost_sum = 0.0;
  double max_norm = 0.0;
  std::map<std::tuple<int, int, int>, long> seen;
  for (size_t i = 0; i < result.trace.rows.size(); ++i) {
    const TraceRow& row = result.trace.rows[i];
    const long cycle = static_cast<long>(i) / 3;
    CHECK(row.t == cycle);
    CHECK(row.junction == static_cast<int>(i % 3) + 1);
    CHECK(row.state >= 0);
    CHECK(row.state < 81);
    CHECK(row.action >= 0);
    CHECK(row.action < 3);
    CHECK(row.cost >= 0.0);
    CHECK(row.cost <= 6.0);

    // states carry the active phase in their top block and phases rotate
    CHECK(row.state / 27 == cycle % 3);
    CHECK(row.next_state / 27 == (cycle + 1) % 3);

    // per-pair counting: the k-th update of a pair uses step 1/(k+1)
    long& k = seen[{row.junction, row.state, row.action}];
    CHECK(row.gamma == 1.0 / static_cast<double>(k + 1));
    k += 1;

    cost_sum += row.cost;
    max_norm = std::max(max_norm, row.q_norm_after);
  }
  CHECK(result.mean_cost == doctest::Approx(cost_sum / (40 * 3)));
  CHECK(result.sup_q_norm == max_norm);
}

TEST_CASE("global step counting uses the cycle index") {
  const TrafficNetwork net = build_single_junction(2, 0.2, 0.5, 40);
  EpisodeConfig config;
  config.cycles = 12;
  config.per_pair_steps = false;

  const EpisodeResult result =
      run_marl_episode(net, build_tables(net, 3), config, RngStream(4));
  REQUIRE(result.trace.rows.size() == 12);
  for (const TraceRow& row : result.trace.rows)
    CHECK(row.gamma == 1.0 / static_cast<double>(row.t + 1));
}

TEST_CASE("episodes are reproducible from the seed") {
  const TrafficNetwork net = build_three_junction_example();
  EpisodeConfig config;
  config.cycles = 25;

  const EpisodeResult a = run_marl_episode(net, build_tables(net, 3), config, RngStream(42));
  const EpisodeResult b = run_marl_episode(net, build_tables(net, 3), config, RngStream(42));
  const EpisodeResult c = run_marl_episode(net, build_tables(net, 3), config, RngStream(43));

  CHECK(serialize_trace(a.trace) == serialize_trace(b.trace));
  for (size_t i = 0; i < 3; ++i) CHECK(a.tables[i].values == b.tables[i].values);
  CHECK(a.mean_cost == b.mean_cost);
  CHECK(serialize_trace(a.trace) != serialize_trace(c.trace));
}

TEST_CASE("episode trace round-trips through its csv form") {
  const TrafficNetwork net = build_three_junction_example();
  EpisodeConfig config;
  config.cycles = 15;
  config.q_init = 0.5;

  const auto initial = build_tables(net, 3, 0.5);
  const EpisodeResult result = run_marl_episode(net, initial, config, RngStream(6));
  const TrainingTrace parsed = parse_trace(serialize_trace(result.trace), initial);

  REQUIRE(parsed.rows.size() == result.trace.rows.size());
  for (size_t i = 0; i < parsed.rows.size(); ++i) {
    CHECK(parsed.rows[i].q_after == result.trace.rows[i].q_after);
    CHECK(parsed.rows[i].q_norm_after == result.trace.rows[i].q_norm_after);
  }
  CHECK(result.sup_q_norm >= 0.5);
}

}  // TEST_SUITE

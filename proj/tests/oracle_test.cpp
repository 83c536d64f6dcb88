#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "tsc/oracle.hpp"

using namespace tsc;

namespace {

// Stop in state 1 for free, or pay to stay in state 0: the fixed points
// have short closed forms, so every solver can be checked against them.
ExplicitMDP two_state_choice() {
  ExplicitMDP mdp;
  mdp.n_states = 2;
  mdp.n_actions = {2, 1};
  mdp.discount = 0.5;
  mdp.p = {{1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}};
  mdp.cost_mean = {1.0, 1.5, 0.0};
  mdp.cost_var = {0.0, 0.0, 0.0};
  return mdp;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("pair indexing with ragged action counts") {
  const ExplicitMDP mdp = two_state_choice();
  CHECK(mdp.n_pairs() == 3);
  CHECK(mdp.pair_index(0, 0) == 0);
  CHECK(mdp.pair_index(0, 1) == 1);
  CHECK(mdp.pair_index(1, 0) == 2);
  for (int k = 0; k < 3; ++k) {
    const auto [i, u] = mdp.state_action(k);
    CHECK(mdp.pair_index(i, u) == k);
  }
  CHECK_THROWS_AS(mdp.pair_index(2, 0), std::out_of_range);
  CHECK_THROWS_AS(mdp.pair_index(0, 2), std::out_of_range);
  CHECK_THROWS_AS(mdp.state_action(3), std::out_of_range);
  CHECK_THROWS_AS(mdp.state_action(-1), std::out_of_range);
}

TEST_CASE("structural validation catches each defect") {
  ExplicitMDP mdp = two_state_choice();
  CHECK_NOTHROW(mdp.validate());

  ExplicitMDP bad = mdp;
  bad.p[1][1] = 0.9;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.p[0][0] = -0.2;
  bad.p[0][1] = 1.2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.discount = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.cost_mean[0] = std::nan("");
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.cost_var[2] = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.n_actions = {2};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  CHECK_THROWS_AS(ExplicitMDP{}.validate(), std::invalid_argument);
}

TEST_CASE("solvers recover the closed-form fixed points") {
  const ExplicitMDP mdp = two_state_choice();

  // One Bellman application from zero only sees the immediate costs.
  CHECK(bellman_T(mdp, {0.0, 0.0}) == ValueVector{1.0, 0.0});
  CHECK_THROWS_AS(bellman_T(mdp, {0.0}), std::invalid_argument);

  // J*(1) = 0; J*(0) = min(1 + J*(0)/2, 1.5) = 1.5
  const ViResult vi = value_iteration(mdp, 1e-10);
  CHECK(vi.converged);
  CHECK(vi.J[0] == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(vi.J[1] == doctest::Approx(0.0).epsilon(1e-9));

  // Q*(0,stay) = 1 + 1.5/2, Q*(0,leave) = 1.5, Q*(1,.) = 0
  const QVector q = solve_q_star(mdp, 1e-12);
  CHECK(q[0] == doctest::Approx(1.75).epsilon(1e-10));
  CHECK(q[1] == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(q[2] == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(greedy_from_q(mdp, q) == std::vector<int>{1, 0});

  CHECK(values_from_q(mdp, q)[0] == doctest::Approx(1.5).epsilon(1e-10));
  const QVector from_j = q_from_values(mdp, {1.5, 0.0});
  CHECK(from_j == QVector{1.75, 1.5, 0.0});

  CHECK_THROWS_AS(value_iteration(mdp, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(solve_q_star(mdp, -1.0), std::invalid_argument);
}

TEST_CASE("minimizing an induced q table is one Bellman application") {
  RngStream rng(51);
  const ExplicitMDP mdp = random_mdp(12, 3, 0.9, rng);
  ValueVector J(12);
  for (double& v : J) v = rng.uniform01() * 10 - 5;
  CHECK(values_from_q(mdp, q_from_values(mdp, J)) == bellman_T(mdp, J));
}

TEST_CASE("in-place sweeps agree with full iteration") {
  RngStream rng(7);
  const ExplicitMDP mdp = random_mdp(20, 3, 0.9, rng);

  std::vector<int> round_robin;
  for (int pass = 0; pass < 4000; ++pass)
    for (int i = 0; i < 20; ++i) round_robin.push_back(i);

  const ViResult sync = value_iteration(mdp, 1e-9);
  const ViResult async = async_value_iteration(mdp, round_robin, 1e-9);
  REQUIRE(sync.converged);
  REQUIRE(async.converged);
  for (int i = 0; i < 20; ++i) CHECK(async.J[i] == doctest::Approx(sync.J[i]).epsilon(1e-8));

  const std::vector<int> too_short{0, 1, 2};
  CHECK_FALSE(async_value_iteration(mdp, too_short, 1e-9).converged);

  const std::vector<int> bad{0, 20};
  CHECK_THROWS_AS(async_value_iteration(mdp, bad, 1e-9), std::out_of_range);
}

TEST_CASE("the q operator contracts at the discount rate") {
  RngStream rng(99);
  for (double beta : {0.5, 0.9, 0.99}) {
    const ExplicitMDP mdp = random_mdp(15, 4, beta, rng);
    for (int trial = 0; trial < 40; ++trial) {
      QVector a(mdp.n_pairs()), b(mdp.n_pairs());
      for (double& v : a) v = rng.uniform01() * 40 - 20;
      for (double& v : b) v = rng.uniform01() * 40 - 20;
      double dist = 0.0;
      for (size_t k = 0; k < a.size(); ++k) dist = std::max(dist, std::abs(a[k] - b[k]));
      const QVector fa = q_operator(mdp, a);
      const QVector fb = q_operator(mdp, b);
      double fdist = 0.0;
      for (size_t k = 0; k < a.size(); ++k) fdist = std::max(fdist, std::abs(fa[k] - fb[k]));
      CHECK(fdist <= beta * dist + 1e-12);
    }
  }
}

TEST_CASE("random instances are exactly stochastic") {
  RngStream rng(12);
  const ExplicitMDP mdp = random_mdp(30, 4, 0.9, rng);
  CHECK_NOTHROW(mdp.validate());
  REQUIRE(mdp.cost_samples.size() == static_cast<size_t>(mdp.n_pairs()));
  for (int k = 0; k < mdp.n_pairs(); ++k) {
    CHECK(std::accumulate(mdp.p[k].begin(), mdp.p[k].end(), 0.0) == 1.0);

    const auto& samples = mdp.cost_samples[k];
    REQUIRE(!samples.empty());
    double mean = 0.0;
    for (double c : samples) mean += c;
    mean /= static_cast<double>(samples.size());
    CHECK(mdp.cost_mean[k] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(mdp.cost_var[k] >= 0.0);
    CHECK(mdp.cost_mean[k] >= 0.0);
    CHECK(mdp.cost_mean[k] <= 1.0);
  }
}

TEST_CASE("sampling follows the transition row and the cost samples") {
  ExplicitMDP mdp = two_state_choice();
  mdp.p[0] = {0.25, 0.75};
  mdp.cost_samples = {{2.0, 4.0}, {}, {}};

  RngStream rng(88);
  const int n = 20000;
  int to_zero = 0;
  for (int i = 0; i < n; ++i)
    if (sample_next_state(mdp, 0, rng) == 0) to_zero += 1;
  const double se = std::sqrt(0.25 * 0.75 * n);
  CHECK(std::abs(to_zero - 0.25 * n) < 4 * se);

  bool saw_low = false, saw_high = false;
  for (int i = 0; i < 100; ++i) {
    const double c = sample_cost(mdp, 0, rng);
    CHECK((c == 2.0 || c == 4.0));
    saw_low = saw_low || c == 2.0;
    saw_high = saw_high || c == 4.0;
  }
  CHECK(saw_low);
  CHECK(saw_high);

  // no recorded samples: the draw degenerates to the mean
  CHECK(sample_cost(mdp, 1, rng) == 1.5);
}

TEST_CASE("mdp text form round-trips moments exactly") {
  RngStream rng(5);
  const ExplicitMDP mdp = random_mdp(9, 3, 0.9, rng);
  const std::string text = serialize_mdp(mdp);
  CHECK(text.substr(0, text.find('\n')) == "tsc-mdp v1");

  const ExplicitMDP back = parse_mdp(text);
  CHECK(back.n_states == mdp.n_states);
  CHECK(back.n_actions == mdp.n_actions);
  CHECK(back.discount == mdp.discount);
  CHECK(back.p == mdp.p);
  CHECK(back.cost_mean == mdp.cost_mean);
  CHECK(back.cost_var == mdp.cost_var);
  CHECK(back.cost_samples.empty());
  CHECK(serialize_mdp(back) == text);

  CHECK_THROWS_AS(parse_mdp("garbage"), std::invalid_argument);
  CHECK_THROWS_AS(parse_mdp("tsc-mdp v1\nn_states 2\n"), std::invalid_argument);
}

TEST_CASE("mdp files survive the disk") {
  RngStream rng(6);
  const ExplicitMDP mdp = random_mdp(5, 2, 0.8, rng);
  const std::string path = "oracle_roundtrip.mdp";
  write_mdp_file(path, mdp);
  const ExplicitMDP back = read_mdp_file(path);
  CHECK(serialize_mdp(back) == serialize_mdp(mdp));
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_mdp_file("missing/nowhere.mdp"), std::runtime_error);
}

TEST_CASE("estimated junction process has the advertised shape") {
  const TrafficNetwork net = build_single_junction(2, 0.2, 0.5, 40);
  MdpBuildOptions options;
  options.samples_per_pair = 60;
  options.keep_cost_samples = true;

  const MdpBuildResult built = mdp_from_network(net, 1, DiscountFactor(0.9), options, RngStream(3));
  CHECK(built.mdp.n_states == 18);
  CHECK(built.mdp.n_pairs() == 54);
  CHECK(built.mdp.discount == 0.9);
  CHECK_NOTHROW(built.mdp.validate());
  CHECK(built.rollouts == 54L * 60);
  CHECK(built.max_row_stderr > 0.0);
  CHECK(built.max_row_stderr <= 0.5 / std::sqrt(60.0) + 1e-12);
  for (const auto& samples : built.mdp.cost_samples) CHECK(samples.size() == 60);

  const MdpBuildResult again =
      mdp_from_network(net, 1, DiscountFactor(0.9), options, RngStream(3));
  CHECK(serialize_mdp(again.mdp) == serialize_mdp(built.mdp));

  const MdpBuildResult other =
      mdp_from_network(net, 1, DiscountFactor(0.9), options, RngStream(4));
  CHECK(serialize_mdp(other.mdp) != serialize_mdp(built.mdp));
}

TEST_CASE("estimation refuses oversized or undersized spaces") {
  const TrafficNetwork net = build_three_junction_example();
  MdpBuildOptions options;
  options.pair_cap = 100;  // 81 states x 3 actions = 243 pairs
  CHECK_THROWS_AS(mdp_from_network(net, 1, DiscountFactor(0.9), options, RngStream(1)),
                  std::length_error);

  MdpBuildOptions tight;
  tight.truncation = 8;  // d2 = 10 cannot be realised below the cut
  CHECK_THROWS_AS(mdp_from_network(net, 1, DiscountFactor(0.9), tight, RngStream(1)),
                  std::invalid_argument);

  CHECK_THROWS_AS(mdp_from_network(net, 9, DiscountFactor(0.9), MdpBuildOptions{}, RngStream(1)),
                  std::out_of_range);
}

}  // TEST_SUITE

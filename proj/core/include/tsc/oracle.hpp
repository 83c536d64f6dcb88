#pragma once

#include <span>
#include <string>
#include <vector>

#include "tsc/network.hpp"
#include "tsc/qlearn.hpp"
#include "tsc/rng.hpp"

namespace tsc {

using ValueVector = std::vector<double>;  // one entry per state
using QVector = std::vector<double>;      // one entry per state-action pair

/// Finite MDP with explicit transition rows and per-pair cost moments.
/// Pairs are indexed state-major: pair_index(i, u) enumerates the actions
/// of state 0, then state 1, and so on. Action counts may differ by state.
struct ExplicitMDP {
  int n_states = 0;
  std::vector<int> n_actions;            // per state
  double discount = 0.0;                 // in (0, 1)
  std::vector<std::vector<double>> p;    // transition row per pair
  std::vector<double> cost_mean;         // per pair
  std::vector<double> cost_var;          // per pair
  std::vector<std::vector<double>> cost_samples;  // optional, per pair

  static ExplicitMDP uniform_shape(int n_states, int actions_per_state, double discount);

  int n_pairs() const;
  int pair_index(int state, int action) const;
  std::pair<int, int> state_action(int pair) const;

  /// Throws std::invalid_argument on any structural defect: empty shape,
  /// discount outside (0,1), a row that is not a probability distribution
  /// within 1e-12, or non-finite costs.
  void validate() const;
};

/// One application of the Bellman operator for expected total discounted
/// cost: (TJ)(i) = min_u [ c(i,u) + discount * sum_j p(j|i,u) J(j) ].
ValueVector bellman_T(const ExplicitMDP& mdp, const ValueVector& J);

struct ViResult {
  ValueVector J;
  long iterations = 0;
  bool converged = false;
};

/// Iterates bellman_T from zero until the contraction stopping rule
/// guarantees ||J - J*||_inf <= tol.
ViResult value_iteration(const ExplicitMDP& mdp, double tol, long max_iterations = 1000000);

/// Gauss-Seidel sweep order given by visit_stream: each entry updates one
/// state in place. Converged means the full Bellman residual got small
/// enough to guarantee ||J - J*||_inf <= tol; if the stream runs out
/// first, the result carries converged = false.
ViResult async_value_iteration(const ExplicitMDP& mdp, std::span<const int> visit_stream,
                               double tol);

/// Q-value operator: F(Q)(i,u) = c(i,u) + discount * sum_j p(j|i,u) min_v Q(j,v).
QVector q_operator(const ExplicitMDP& mdp, const QVector& q);

/// Fixed point of q_operator, iterated from zero to within tol in inf-norm.
QVector solve_q_star(const ExplicitMDP& mdp, double tol, long max_iterations = 1000000);

/// Q-values induced by a state-value function: c + discount * P J.
QVector q_from_values(const ExplicitMDP& mdp, const ValueVector& J);

ValueVector values_from_q(const ExplicitMDP& mdp, const QVector& q);

/// Greedy (min-cost) action per state under q.
std::vector<int> greedy_from_q(const ExplicitMDP& mdp, const QVector& q);

int sample_next_state(const ExplicitMDP& mdp, int pair, RngStream& rng);

/// Draws from the recorded cost samples when present, otherwise returns
/// the mean cost (a degenerate distribution).
double sample_cost(const ExplicitMDP& mdp, int pair, RngStream& rng);

double max_abs_q(const QVector& q);

struct MdpBuildOptions {
  double d1 = 5.0;
  double d2 = 10.0;
  std::vector<double> action_durations{10.0, 20.0, 30.0};
  /// Queue counts used to realise an occupancy level are sampled uniformly
  /// from the level's count range clipped to [0, truncation].
  int truncation = 40;
  int samples_per_pair = 1000;
  /// Refuse to enumerate more than this many state-action pairs.
  int pair_cap = 10000;
  /// Green duration frozen onto phases not controlled by the decision
  /// (this junction's other phases and every other junction).
  double frozen_duration = 20.0;
  bool keep_cost_samples = true;
};

struct MdpBuildResult {
  ExplicitMDP mdp;
  /// Largest standard error over all estimated transition probabilities.
  double max_row_stderr = 0.0;
  long rollouts = 0;
};

/// Estimates the explicit decision process seen by one junction's
/// controller by Monte-Carlo rollouts of the simulator: for every
/// (discretized state, action) pair it draws representative lane counts,
/// applies the action to the active phase, runs one cycle and records the
/// next discretized state and the neighborhood cost. Other junctions hold
/// the frozen green duration throughout, which is the single-agent view of
/// the multi-agent system.
///
/// Throws std::length_error when the state-action space exceeds
/// options.pair_cap (the message reports the sizes), and
/// std::invalid_argument when d2 exceeds a usable count range.
MdpBuildResult mdp_from_network(const TrafficNetwork& net, int junction_id,
                                DiscountFactor discount, const MdpBuildOptions& options,
                                const RngStream& root);

/// Canonical text form; round-trips bit-exactly (cost samples are moments
/// only and are intentionally not persisted).
std::string serialize_mdp(const ExplicitMDP& mdp);
ExplicitMDP parse_mdp(const std::string& text);
void write_mdp_file(const std::string& path, const ExplicitMDP& mdp);
ExplicitMDP read_mdp_file(const std::string& path);

/// Row-stochastic MDP with random transitions and costs, for verification
/// sweeps. Each pair's cost is uniform on a random sub-interval of [0, 1],
/// with matching recorded samples.
ExplicitMDP random_mdp(int n_states, int actions_per_state, double discount, RngStream& rng);

}  // namespace tsc

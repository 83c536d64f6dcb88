#include "tsc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tsc/sim.hpp"
#include "tsc/textio.hpp"

namespace tsc {

ExplicitMDP ExplicitMDP::uniform_shape(int n_states, int actions_per_state, double discount) {
  ExplicitMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions.assign(n_states, actions_per_state);
  mdp.discount = discount;
  const int pairs = n_states * actions_per_state;
  mdp.p.assign(pairs, std::vector<double>(n_states, 0.0));
  mdp.cost_mean.assign(pairs, 0.0);
  mdp.cost_var.assign(pairs, 0.0);
  return mdp;
}

int ExplicitMDP::n_pairs() const {
  return std::accumulate(n_actions.begin(), n_actions.end(), 0);
}

int ExplicitMDP::pair_index(int state, int action) const {
  if (state < 0 || state >= n_states)
    throw std::out_of_range("state " + std::to_string(state) + " out of range");
  if (action < 0 || action >= n_actions[state])
    throw std::out_of_range("action " + std::to_string(action) + " out of range for state " +
                            std::to_string(state));
  int offset = 0;
  for (int i = 0; i < state; ++i) offset += n_actions[i];
  return offset + action;
}

std::pair<int, int> ExplicitMDP::state_action(int pair) const {
  if (pair < 0) throw std::out_of_range("pair index " + std::to_string(pair) + " out of range");
  int remaining = pair;
  for (int i = 0; i < n_states; ++i) {
    if (remaining < n_actions[i]) return {i, remaining};
    remaining -= n_actions[i];
  }
  throw std::out_of_range("pair index " + std::to_string(pair) + " out of range");
}

void ExplicitMDP::validate() const {
  if (n_states < 1) throw std::invalid_argument("MDP needs at least one state");
  if (static_cast<int>(n_actions.size()) != n_states)
    throw std::invalid_argument("action count list does not match the state count");
  for (int n : n_actions)
    if (n < 1) throw std::invalid_argument("every state needs at least one action");
  if (!(discount > 0.0) || !(discount < 1.0))
    throw std::invalid_argument("discount must lie in (0, 1), got " + format_double(discount));
  const int pairs = n_pairs();
  if (static_cast<int>(p.size()) != pairs || static_cast<int>(cost_mean.size()) != pairs ||
      static_cast<int>(cost_var.size()) != pairs)
    throw std::invalid_argument("row or cost arrays do not match the pair count");
  for (int k = 0; k < pairs; ++k) {
    if (static_cast<int>(p[k].size()) != n_states)
      throw std::invalid_argument("transition row " + std::to_string(k) + " has wrong length");
    double total = 0.0;
    for (double v : p[k]) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("transition row " + std::to_string(k) +
                                    " has a negative or non-finite entry");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("transition row " + std::to_string(k) + " sums to " +
                                  format_double(total));
    if (!std::isfinite(cost_mean[k]) || !std::isfinite(cost_var[k]) || cost_var[k] < 0.0)
      throw std::invalid_argument("cost moments for pair " + std::to_string(k) + " are invalid");
  }
}

namespace {

double dot(const std::vector<double>& row, const ValueVector& J) {
  double acc = 0.0;
  for (size_t j = 0; j < row.size(); ++j) acc += row[j] * J[j];
  return acc;
}

double inf_norm_diff(const ValueVector& a, const ValueVector& b) {
  double n = 0.0;
  for (size_t i = 0; i < a.size(); ++i) n = std::max(n, std::abs(a[i] - b[i]));
  return n;
}

}  // namespace

ValueVector bellman_T(const ExplicitMDP& mdp, const ValueVector& J) {
  if (static_cast<int>(J.size()) != mdp.n_states)
    throw std::invalid_argument("value vector has wrong length");
  ValueVector out(mdp.n_states);
  int pair = 0;
  for (int i = 0; i < mdp.n_states; ++i) {
    double best = 0.0;
    for (int u = 0; u < mdp.n_actions[i]; ++u, ++pair) {
      const double v = mdp.cost_mean[pair] + mdp.discount * dot(mdp.p[pair], J);
      if (u == 0 || v < best) best = v;
    }
    out[i] = best;
  }
  return out;
}

ViResult value_iteration(const ExplicitMDP& mdp, double tol, long max_iterations) {
  mdp.validate();
  if (!(tol > 0)) throw std::invalid_argument("tolerance must be positive");
  ViResult r;
  r.J.assign(mdp.n_states, 0.0);
  // ||J_k - J*|| <= beta/(1-beta) ||J_k - J_{k-1}||, so stop once the
  // iterate delta drops below tol * (1-beta)/beta.
  const double stop = tol * (1.0 - mdp.discount) / mdp.discount;
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    ValueVector next = bellman_T(mdp, r.J);
    const double delta = inf_norm_diff(next, r.J);
    r.J = std::move(next);
    if (delta <= stop) {
      r.converged = true;
      ++r.iterations;
      break;
    }
  }
  return r;
}

ViResult async_value_iteration(const ExplicitMDP& mdp, std::span<const int> visit_stream,
                               double tol) {
  mdp.validate();
  if (!(tol > 0)) throw std::invalid_argument("tolerance must be positive");
  ViResult r;
  r.J.assign(mdp.n_states, 0.0);

  // Residual bound: ||J - J*|| <= ||TJ - J|| / (1 - beta).
  const double stop = tol * (1.0 - mdp.discount);
  const long check_every = std::max(1, mdp.n_states);

  auto residual_ok = [&]() {
    const ValueVector tj = bellman_T(mdp, r.J);
    return inf_norm_diff(tj, r.J) <= stop;
  };

  long since_check = 0;
  for (int state : visit_stream) {
    if (state < 0 || state >= mdp.n_states)
      throw std::out_of_range("visit stream entry " + std::to_string(state) + " out of range");
    double best = 0.0;
    for (int u = 0; u < mdp.n_actions[state]; ++u) {
      const int pair = mdp.pair_index(state, u);
      const double v = mdp.cost_mean[pair] + mdp.discount * dot(mdp.p[pair], r.J);
      if (u == 0 || v < best) best = v;
    }
    r.J[state] = best;
    ++r.iterations;
    if (++since_check >= check_every) {
      since_check = 0;
      if (residual_ok()) {
        r.converged = true;
        return r;
      }
    }
  }
  r.converged = residual_ok();
  return r;
}

QVector q_operator(const ExplicitMDP& mdp, const QVector& q) {
  if (static_cast<int>(q.size()) != mdp.n_pairs())
    throw std::invalid_argument("q vector has wrong length");
  const ValueVector mins = values_from_q(mdp, q);
  QVector out(q.size());
  for (size_t k = 0; k < q.size(); ++k)
    out[k] = mdp.cost_mean[k] + mdp.discount * dot(mdp.p[k], mins);
  return out;
}

QVector solve_q_star(const ExplicitMDP& mdp, double tol, long max_iterations) {
  mdp.validate();
  if (!(tol > 0)) throw std::invalid_argument("tolerance must be positive");
  QVector q(mdp.n_pairs(), 0.0);
  const double stop = tol * (1.0 - mdp.discount) / mdp.discount;
  for (long it = 0; it < max_iterations; ++it) {
    QVector next = q_operator(mdp, q);
    double delta = 0.0;
    for (size_t k = 0; k < q.size(); ++k) delta = std::max(delta, std::abs(next[k] - q[k]));
    q = std::move(next);
    if (delta <= stop) return q;
  }
  throw std::runtime_error("q-value iteration did not converge within the iteration budget");
}

QVector q_from_values(const ExplicitMDP& mdp, const ValueVector& J) {
  if (static_cast<int>(J.size()) != mdp.n_states)
    throw std::invalid_argument("value vector has wrong length");
  QVector q(mdp.n_pairs());
  for (int k = 0; k < mdp.n_pairs(); ++k)
    q[k] = mdp.cost_mean[k] + mdp.discount * dot(mdp.p[k], J);
  return q;
}

ValueVector values_from_q(const ExplicitMDP& mdp, const QVector& q) {
  ValueVector mins(mdp.n_states);
  int pair = 0;
  for (int i = 0; i < mdp.n_states; ++i) {
    double best = 0.0;
    for (int u = 0; u < mdp.n_actions[i]; ++u, ++pair)
      if (u == 0 || q[pair] < best) best = q[pair];
    mins[i] = best;
  }
  return mins;
}

std::vector<int> greedy_from_q(const ExplicitMDP& mdp, const QVector& q) {
  std::vector<int> policy(mdp.n_states);
  int pair = 0;
  for (int i = 0; i < mdp.n_states; ++i) {
    int best = 0;
    double best_v = 0.0;
    for (int u = 0; u < mdp.n_actions[i]; ++u, ++pair) {
      if (u == 0 || q[pair] < best_v) {
        best = u;
        best_v = q[pair];
      }
    }
    policy[i] = best;
  }
  return policy;
}

int sample_next_state(const ExplicitMDP& mdp, int pair, RngStream& rng) {
  const double u = rng.uniform01();
  const auto& row = mdp.p[pair];
  double acc = 0.0;
  for (int j = 0; j < mdp.n_states; ++j) {
    acc += row[j];
    if (u < acc) return j;
  }
  // Rounding left a sliver of probability unassigned; take the last
  // positive entry.
  for (int j = mdp.n_states - 1; j >= 0; --j)
    if (row[j] > 0) return j;
  throw std::logic_error("transition row has no positive entry");
}

double sample_cost(const ExplicitMDP& mdp, int pair, RngStream& rng) {
  const auto& samples =
      pair < static_cast<int>(mdp.cost_samples.size()) ? mdp.cost_samples[pair]
                                                       : std::vector<double>{};
  if (samples.empty()) return mdp.cost_mean[pair];
  return samples[rng.uniform_int(0, static_cast<int>(samples.size()) - 1)];
}

double max_abs_q(const QVector& q) {
  double n = 0.0;
  for (double v : q) n = std::max(n, std::abs(v));
  return n;
}

MdpBuildResult mdp_from_network(const TrafficNetwork& net, int junction_id,
                                DiscountFactor discount, const MdpBuildOptions& options,
                                const RngStream& root) {
  const JunctionSpec* junction = net.find_junction(junction_id);
  if (!junction) throw std::out_of_range("unknown junction id " + std::to_string(junction_id));
  if (options.samples_per_pair < 1)
    throw std::invalid_argument("samples_per_pair must be at least 1");
  if (options.action_durations.empty())
    throw std::invalid_argument("need at least one action duration");

  const int lanes = static_cast<int>(junction->incoming_lanes.size());
  const int phases = static_cast<int>(junction->phases.size());
  StateSpace space(lanes, phases);
  const int n_actions = static_cast<int>(options.action_durations.size());
  const long pairs = static_cast<long>(space.size()) * n_actions;
  if (pairs > options.pair_cap)
    throw std::length_error("state-action space too large: " + std::to_string(space.size()) +
                            " states x " + std::to_string(n_actions) + " actions = " +
                            std::to_string(pairs) + " pairs exceeds cap " +
                            std::to_string(options.pair_cap));

  // Count ranges per occupancy level, clipped to the truncation bound.
  // Every level must keep at least one representative count.
  auto level_range = [&](const LaneSpec& lane, OccupancyLevel level) {
    const int hi_cap = std::min(lane.capacity, options.truncation);
    int lo = 0, hi = 0;
    switch (level) {
      case OccupancyLevel::Low:
        lo = 0;
        hi = static_cast<int>(std::ceil(options.d1)) - 1;
        break;
      case OccupancyLevel::Medium:
        lo = static_cast<int>(std::ceil(options.d1));
        hi = static_cast<int>(std::ceil(options.d2)) - 1;
        break;
      case OccupancyLevel::High:
        lo = static_cast<int>(std::ceil(options.d2));
        hi = hi_cap;
        break;
    }
    hi = std::min(hi, hi_cap);
    if (lo > hi)
      throw std::invalid_argument(
          "no representative count for occupancy level " +
          std::to_string(static_cast<int>(level)) + " on lane " + std::to_string(lane.id) +
          " (thresholds vs capacity/truncation)");
    return std::pair<int, int>{lo, hi};
  };

  ExplicitMDP mdp = ExplicitMDP::uniform_shape(space.size(), n_actions, discount.value);
  if (options.keep_cost_samples) mdp.cost_samples.assign(mdp.n_pairs(), {});

  RngStream estimation = root.substream("estimation");
  MdpBuildResult result;

  std::vector<long> hits(space.size());
  for (int s = 0; s < space.size(); ++s) {
    const DiscretizedState state = space.decode(s);
    for (int a = 0; a < n_actions; ++a) {
      const int pair = mdp.pair_index(s, a);
      std::fill(hits.begin(), hits.end(), 0);
      double mean = 0.0, m2 = 0.0;

      GreenSchedule schedule = GreenSchedule::uniform(net, options.frozen_duration);
      schedule.set(junction_id, state.active_phase, options.action_durations[a]);

      for (int n = 0; n < options.samples_per_pair; ++n) {
        Simulation sim(net, estimation.substream("rollout-" + std::to_string(pair) + "-" +
                                                 std::to_string(n)));
        for (int li = 0; li < lanes; ++li) {
          const LaneSpec* lane = net.find_lane(junction->incoming_lanes[li]);
          const auto [lo, hi] = level_range(*lane, state.occupancies[li]);
          sim.set_count(lane->id, estimation.uniform_int(lo, hi));
        }
        // Lanes of other junctions have no representation in this state;
        // draw them uniformly over the truncated range.
        for (const auto& lane : net.lanes) {
          if (lane.junction == junction_id) continue;
          sim.set_count(lane.id,
                        estimation.uniform_int(0, std::min(lane.capacity, options.truncation)));
        }

        sim.advance_cycle(schedule);
        ++result.rollouts;

        const auto counts = sim.counts_by_lane();
        const int next_phase = state.active_phase % phases + 1;
        const int s_next = space.index(
            observe_state(net, counts, junction_id, next_phase, options.d1, options.d2));
        hits[s_next] += 1;

        const double cost =
            neighborhood_cost(net, counts, junction_id, options.d1, options.d2).value;
        const double delta = cost - mean;
        mean += delta / static_cast<double>(n + 1);
        m2 += delta * (cost - mean);
        if (options.keep_cost_samples) mdp.cost_samples[pair].push_back(cost);
      }

      const double n = static_cast<double>(options.samples_per_pair);
      for (int j = 0; j < space.size(); ++j) {
        const double pj = static_cast<double>(hits[j]) / n;
        mdp.p[pair][j] = pj;
        if (pj > 0.0 && pj < 1.0)
          result.max_row_stderr =
              std::max(result.max_row_stderr, std::sqrt(pj * (1.0 - pj) / n));
      }
      mdp.cost_mean[pair] = mean;
      mdp.cost_var[pair] =
          options.samples_per_pair > 1 ? m2 / static_cast<double>(options.samples_per_pair - 1) : 0.0;
    }
  }

  mdp.validate();
  result.mdp = std::move(mdp);
  return result;
}

namespace {

constexpr const char* kMdpMagic = "tsc-mdp v1";

}

std::string serialize_mdp(const ExplicitMDP& mdp) {
  std::ostringstream out;
  out << kMdpMagic << '\n';
  out << "n_states " << mdp.n_states << '\n';
  out << "discount " << format_double(mdp.discount) << '\n';
  out << "actions";
  for (int n : mdp.n_actions) out << ' ' << n;
  out << '\n';

  long nonzero = 0;
  for (const auto& row : mdp.p)
    for (double v : row)
      if (v != 0.0) ++nonzero;
  out << "transitions " << nonzero << '\n';
  for (int k = 0; k < mdp.n_pairs(); ++k) {
    const auto [i, u] = mdp.state_action(k);
    for (int j = 0; j < mdp.n_states; ++j)
      if (mdp.p[k][j] != 0.0)
        out << i << ' ' << u << ' ' << j << ' ' << format_double(mdp.p[k][j]) << '\n';
  }
  out << "costs " << mdp.n_pairs() << '\n';
  for (int k = 0; k < mdp.n_pairs(); ++k) {
    const auto [i, u] = mdp.state_action(k);
    out << i << ' ' << u << ' ' << format_double(mdp.cost_mean[k]) << ' '
        << format_double(mdp.cost_var[k]) << '\n';
  }
  return out.str();
}

ExplicitMDP parse_mdp(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(in, line))
      throw std::invalid_argument(std::string("mdp file truncated before ") + what);
    return split_ws(line);
  };

  if (!std::getline(in, line) || line != kMdpMagic)
    throw std::invalid_argument("not an mdp file (missing magic line)");

  ExplicitMDP mdp;
  auto f = next("n_states");
  if (f.size() != 2 || f[0] != "n_states") throw std::invalid_argument("expected n_states line");
  mdp.n_states = static_cast<int>(parse_long(f[1]));
  f = next("discount");
  if (f.size() != 2 || f[0] != "discount") throw std::invalid_argument("expected discount line");
  mdp.discount = parse_double(f[1]);
  f = next("actions");
  if (f.size() != static_cast<size_t>(mdp.n_states) + 1 || f[0] != "actions")
    throw std::invalid_argument("expected actions line with one count per state");
  for (int i = 0; i < mdp.n_states; ++i)
    mdp.n_actions.push_back(static_cast<int>(parse_long(f[i + 1])));

  mdp.p.assign(mdp.n_pairs(), std::vector<double>(mdp.n_states, 0.0));
  mdp.cost_mean.assign(mdp.n_pairs(), 0.0);
  mdp.cost_var.assign(mdp.n_pairs(), 0.0);

  f = next("transitions");
  if (f.size() != 2 || f[0] != "transitions")
    throw std::invalid_argument("expected transitions line");
  const long nonzero = parse_long(f[1]);
  for (long e = 0; e < nonzero; ++e) {
    f = next("transition entry");
    if (f.size() != 4) throw std::invalid_argument("malformed transition entry: '" + line + "'");
    const int i = static_cast<int>(parse_long(f[0]));
    const int u = static_cast<int>(parse_long(f[1]));
    const int j = static_cast<int>(parse_long(f[2]));
    if (j < 0 || j >= mdp.n_states)
      throw std::invalid_argument("transition targets unknown state " + std::to_string(j));
    mdp.p[mdp.pair_index(i, u)][j] = parse_double(f[3]);
  }

  f = next("costs");
  if (f.size() != 2 || f[0] != "costs") throw std::invalid_argument("expected costs line");
  const long costs = parse_long(f[1]);
  if (costs != mdp.n_pairs())
    throw std::invalid_argument("cost count does not match the pair count");
  for (long e = 0; e < costs; ++e) {
    f = next("cost entry");
    if (f.size() != 4) throw std::invalid_argument("malformed cost entry: '" + line + "'");
    const int pair = mdp.pair_index(static_cast<int>(parse_long(f[0])),
                                    static_cast<int>(parse_long(f[1])));
    mdp.cost_mean[pair] = parse_double(f[2]);
    mdp.cost_var[pair] = parse_double(f[3]);
  }
  mdp.validate();
  return mdp;
}

void write_mdp_file(const std::string& path, const ExplicitMDP& mdp) {
  write_text_file(path, serialize_mdp(mdp));
}

ExplicitMDP read_mdp_file(const std::string& path) {
  return parse_mdp(read_text_file(path));
}

ExplicitMDP random_mdp(int n_states, int actions_per_state, double discount, RngStream& rng) {
  ExplicitMDP mdp = ExplicitMDP::uniform_shape(n_states, actions_per_state, discount);
  mdp.cost_samples.assign(mdp.n_pairs(), {});
  for (int k = 0; k < mdp.n_pairs(); ++k) {
    // Exponential weights normalised to a stochastic row.
    double total = 0.0;
    for (int j = 0; j < n_states; ++j) {
      const double w = -std::log(1.0 - rng.uniform01());
      mdp.p[k][j] = w;
      total += w;
    }
    for (int j = 0; j < n_states; ++j) mdp.p[k][j] /= total;
    // Renormalise exactly: force the row to sum to 1 despite rounding.
    double acc = 0.0;
    for (int j = 0; j < n_states - 1; ++j) acc += mdp.p[k][j];
    mdp.p[k][n_states - 1] = 1.0 - acc;

    const double lo = rng.uniform01();
    const double hi = lo + rng.uniform01() * (1.0 - lo);
    // Cost uniform on [lo, hi]; keep a sample set for noise statistics.
    const int n_samples = 64;
    double mean = 0.0;
    for (int s = 0; s < n_samples; ++s) {
      const double c = lo + (hi - lo) * rng.uniform01();
      mdp.cost_samples[k].push_back(c);
      mean += c;
    }
    mean /= n_samples;
    double var = 0.0;
    for (double c : mdp.cost_samples[k]) var += (c - mean) * (c - mean);
    var /= (n_samples - 1);
    mdp.cost_mean[k] = mean;
    mdp.cost_var[k] = var;
  }
  mdp.validate();
  return mdp;
}

}  // namespace tsc

#include "tsc/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include "tsc/textio.hpp"

namespace tsc {

ScheduleAudit check_step_schedule(const StepSchedule& schedule) {
  ScheduleAudit audit;
  switch (schedule.kind) {
    case StepSchedule::Kind::Harmonic:
      audit.divergent_sum = true;
      audit.square_summable = true;
      audit.reason = "1/(t+" + format_double(schedule.offset) +
                     ") sums like log t and its squares converge";
      break;
    case StepSchedule::Kind::PolynomialDecay:
      audit.divergent_sum = schedule.exponent <= 1.0;
      audit.square_summable = schedule.exponent > 0.5;
      audit.reason = "(t+1)^-" + format_double(schedule.exponent) + ": sum " +
                     (audit.divergent_sum ? "diverges" : "converges") + ", squared sum " +
                     (audit.square_summable ? "converges" : "diverges");
      break;
    case StepSchedule::Kind::Constant:
      audit.divergent_sum = true;
      audit.square_summable = false;
      audit.reason = "constant " + format_double(schedule.constant) +
                     ": squared steps keep accumulating";
      break;
  }
  return audit;
}

namespace {

double sup_norm(const QVector& v) {
  double n = 0.0;
  for (double x : v) n = std::max(n, std::abs(x));
  return n;
}

/// Streaming mean and variance.
struct Welford {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double standard_error() const {
    return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
  }
};

}  // namespace

ContractionEstimate estimate_contraction(const QOperator& op, int dim, int trials, double scale,
                                         RngStream& rng) {
  if (dim < 1) throw std::invalid_argument("operator dimension must be positive");
  if (trials < 1) throw std::invalid_argument("need at least one trial");
  if (!(scale > 0)) throw std::invalid_argument("scale must be positive");
  ContractionEstimate est;
  QVector a(dim), b(dim), diff(dim);
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < dim; ++i) {
      a[i] = (2.0 * rng.uniform01() - 1.0) * scale;
      b[i] = (2.0 * rng.uniform01() - 1.0) * scale;
    }
    double denom = 0.0;
    for (int i = 0; i < dim; ++i) denom = std::max(denom, std::abs(a[i] - b[i]));
    if (denom == 0.0) continue;
    const QVector fa = op(a);
    const QVector fb = op(b);
    if (fa.size() != a.size() || fb.size() != b.size())
      throw std::invalid_argument("operator changed the vector dimension");
    double numer = 0.0;
    for (size_t i = 0; i < fa.size(); ++i) numer = std::max(numer, std::abs(fa[i] - fb[i]));
    est.modulus = std::max(est.modulus, numer / denom);
    ++est.trials;
  }
  return est;
}

namespace {

/// Folds one finished group (w draws in `w_stats`, squared draws in
/// `w2_stats`, variance bound `bound`) into the audit.
void fold_group(NoiseAudit& audit, const Welford& w_stats, const Welford& w2_stats,
                double bound) {
  ++audit.groups;
  audit.samples += w_stats.n;

  const double se = w_stats.standard_error();
  const double z = se > 0.0 ? std::abs(w_stats.mean) / se
                            : (std::abs(w_stats.mean) <= 1e-12 ? 0.0 : HUGE_VAL);
  audit.max_abs_z = std::max(audit.max_abs_z, z);
  if (std::abs(w_stats.mean) <= 3.0 * se + 1e-12) ++audit.zero_mean_groups;

  const double slack = 3.0 * w2_stats.standard_error() + 1e-12;
  const double excess = w2_stats.mean - bound - slack;
  audit.worst_excess = audit.groups == 1 ? excess : std::max(audit.worst_excess, excess);
  if (excess <= 0.0) ++audit.bounded_groups;
}

void finish_audit(NoiseAudit& audit, const Welford& pooled) {
  audit.mean = pooled.mean;
  audit.mean_se = pooled.standard_error();
  if (audit.groups > 0) {
    audit.zero_mean_fraction =
        static_cast<double>(audit.zero_mean_groups) / static_cast<double>(audit.groups);
    audit.bounded_fraction =
        static_cast<double>(audit.bounded_groups) / static_cast<double>(audit.groups);
  }
  audit.zero_mean_ok = audit.groups > 0 && audit.zero_mean_fraction >= 0.95;
  audit.second_moment_ok = audit.groups > 0 && audit.bounded_groups == audit.groups;
}

}  // namespace

NoiseAudit noise_statistics(const ExplicitMDP& mdp, const QVector& q, int samples_per_pair,
                            RngStream& rng) {
  mdp.validate();
  if (samples_per_pair < 2) throw std::invalid_argument("need at least two samples per pair");
  if (static_cast<int>(q.size()) != mdp.n_pairs())
    throw std::invalid_argument("q vector has wrong length");

  const ValueVector mins = values_from_q(mdp, q);
  const QVector fq = q_operator(mdp, q);
  const double q_range = max_abs_q(q);

  NoiseAudit audit;
  Welford pooled;
  for (int k = 0; k < mdp.n_pairs(); ++k) {
    Welford w_stats, w2_stats;
    for (int n = 0; n < samples_per_pair; ++n) {
      const double cost = sample_cost(mdp, k, rng);
      const int next = sample_next_state(mdp, k, rng);
      const double w = cost + mdp.discount * mins[next] - fq[k];
      w_stats.add(w);
      w2_stats.add(w * w);
      pooled.add(w);
    }
    fold_group(audit, w_stats, w2_stats, mdp.cost_var[k] + q_range * q_range);
  }
  finish_audit(audit, pooled);
  return audit;
}

NoiseAudit noise_statistics(const TrainingTrace& trace, double cost_bound, double discount,
                            long min_group) {
  if (!(cost_bound >= 0)) throw std::invalid_argument("cost bound must be non-negative");
  if (min_group < 2) throw std::invalid_argument("min_group must be at least 2");

  // Recover each row's sampled target from the update identity
  // q_after = (1-step) q_before + step * target, then centre it on the
  // mean of the earlier targets of its group so the baseline is known
  // before the draw.
  struct Group {
    long n = 0;
    double mean = 0.0;
    Welford w_stats, w2_stats;
  };
  std::map<std::tuple<int, int, int>, long> totals;
  for (const TraceRow& row : trace.rows)
    ++totals[{row.junction, row.state, row.action}];

  double max_norm = 0.0;
  for (const TraceRow& row : trace.rows) max_norm = std::max(max_norm, row.q_norm_after);

  std::map<std::tuple<int, int, int>, Group> groups;
  Welford pooled;
  for (const TraceRow& row : trace.rows) {
    const auto key = std::make_tuple(row.junction, row.state, row.action);
    if (totals[key] < min_group) continue;
    if (!(row.gamma > 0.0))
      throw std::invalid_argument("trace row with non-positive step size");
    const double target = (row.q_after - (1.0 - row.gamma) * row.q_before) / row.gamma;
    Group& g = groups[key];
    if (g.n > 0) {
      const double w = target - g.mean;
      g.w_stats.add(w);
      g.w2_stats.add(w * w);
      pooled.add(w);
    }
    ++g.n;
    g.mean += (target - g.mean) / static_cast<double>(g.n);
  }

  NoiseAudit audit;
  // Targets live in [-discount*maxQ, cost_bound + discount*maxQ]; a
  // variable on an interval of width W has variance at most W^2/4.
  const double width = cost_bound + 2.0 * discount * max_norm;
  const double bound = width * width / 4.0;
  for (const auto& [key, g] : groups) fold_group(audit, g.w_stats, g.w2_stats, bound);
  finish_audit(audit, pooled);
  return audit;
}

BoundednessAudit boundedness_audit(const TrainingTrace& trace, double initial_norm,
                                   double cost_bound, double discount) {
  if (!(discount > 0.0) || !(discount < 1.0))
    throw std::invalid_argument("discount must lie in (0, 1)");
  if (!(cost_bound >= 0) || !(initial_norm >= 0))
    throw std::invalid_argument("bounds must be non-negative");
  BoundednessAudit audit;
  audit.bound = cost_bound / (1.0 - discount);
  audit.initial_norm = initial_norm;
  audit.envelope = std::max(audit.bound, initial_norm);
  audit.sup_norm = initial_norm;
  for (const TraceRow& row : trace.rows) {
    audit.sup_norm = std::max(audit.sup_norm, row.q_norm_after);
    ++audit.rows;
  }
  audit.within_envelope = audit.sup_norm <= audit.envelope + 1e-9;
  audit.within_bound = audit.sup_norm <= audit.bound + 1e-9;
  return audit;
}

DriftFieldAudit drift_field_estimate(const ExplicitMDP& mdp, const QVector& q,
                                     int samples_per_pair, RngStream& rng) {
  mdp.validate();
  if (samples_per_pair < 2) throw std::invalid_argument("need at least two samples per pair");
  if (static_cast<int>(q.size()) != mdp.n_pairs())
    throw std::invalid_argument("q vector has wrong length");

  const ValueVector mins = values_from_q(mdp, q);
  const QVector fq = q_operator(mdp, q);

  DriftFieldAudit audit;
  audit.estimated.resize(mdp.n_pairs());
  audit.exact.resize(mdp.n_pairs());
  audit.se.resize(mdp.n_pairs());
  long within = 0;
  for (int k = 0; k < mdp.n_pairs(); ++k) {
    Welford targets;
    for (int n = 0; n < samples_per_pair; ++n) {
      const double cost = sample_cost(mdp, k, rng);
      const int next = sample_next_state(mdp, k, rng);
      targets.add(cost + mdp.discount * mins[next]);
    }
    audit.estimated[k] = targets.mean - q[k];
    audit.exact[k] = fq[k] - q[k];
    audit.se[k] = targets.standard_error();
    const double err = std::abs(audit.estimated[k] - audit.exact[k]);
    audit.max_abs_error = std::max(audit.max_abs_error, err);
    audit.max_se = std::max(audit.max_se, audit.se[k]);
    const double z = audit.se[k] > 0 ? err / audit.se[k] : (err <= 1e-12 ? 0.0 : HUGE_VAL);
    audit.max_z = std::max(audit.max_z, z);
    if (err <= 3.0 * audit.se[k] + 1e-12) ++within;
  }
  audit.within_fraction =
      mdp.n_pairs() > 0 ? static_cast<double>(within) / mdp.n_pairs() : 0.0;
  audit.consistent = audit.within_fraction >= 0.95 && audit.max_z <= 6.0;
  return audit;
}

JacobianSignAudit cooperative_jacobian_signs(const ExplicitMDP& mdp, const QVector& q,
                                             double delta_scale) {
  mdp.validate();
  if (static_cast<int>(q.size()) != mdp.n_pairs())
    throw std::invalid_argument("q vector has wrong length");
  if (!(delta_scale > 0)) throw std::invalid_argument("delta_scale must be positive");

  JacobianSignAudit audit;
  audit.dim = mdp.n_pairs();
  const double delta = delta_scale * (1.0 + sup_norm(q));

  QVector probe = q;
  std::vector<double> column(audit.dim);
  bool first_diag = true;
  bool first_offdiag = true;
  for (int l = 0; l < audit.dim; ++l) {
    probe[l] = q[l] + delta;
    const std::vector<int> greedy_hi = greedy_from_q(mdp, probe);
    const QVector f_hi = q_operator(mdp, probe);
    probe[l] = q[l] - delta;
    const std::vector<int> greedy_lo = greedy_from_q(mdp, probe);
    const QVector f_lo = q_operator(mdp, probe);
    probe[l] = q[l];

    if (greedy_hi != greedy_lo) {
      ++audit.boundary_columns;
      continue;
    }

    for (int k = 0; k < audit.dim; ++k) {
      // d h_k / d q_l with h = F - identity
      column[k] = (f_hi[k] - f_lo[k]) / (2.0 * delta) - (k == l ? 1.0 : 0.0);
    }

    if (first_diag || column[l] > audit.max_diagonal) audit.max_diagonal = column[l];
    first_diag = false;
    if (column[l] < 0.0) ++audit.negative_diagonal;
    for (int k = 0; k < audit.dim; ++k) {
      if (k == l) continue;
      if (first_offdiag || column[k] < audit.min_offdiagonal) audit.min_offdiagonal = column[k];
      first_offdiag = false;
      if (column[k] >= -1e-12)
        ++audit.offdiagonal_nonnegative;
      else
        ++audit.offdiagonal_violations;
    }
  }
  const long probed = audit.dim - audit.boundary_columns;
  audit.cooperative = probed > 0 && audit.negative_diagonal == probed &&
                      audit.offdiagonal_violations == 0;
  return audit;
}

OracleGapAudit oracle_gap(const QVector& learned, const std::vector<long>& pair_visits,
                          const ExplicitMDP& mdp, const QVector& q_star, long min_visits) {
  if (learned.size() != q_star.size() ||
      static_cast<int>(learned.size()) != mdp.n_pairs() ||
      pair_visits.size() != learned.size())
    throw std::invalid_argument("table, visit and oracle shapes disagree");

  OracleGapAudit audit;
  audit.total_pairs = mdp.n_pairs();
  double gap_sum = 0.0;
  for (int k = 0; k < mdp.n_pairs(); ++k) {
    if (pair_visits[k] < min_visits) continue;
    const double gap = std::abs(learned[k] - q_star[k]);
    audit.max_gap = std::max(audit.max_gap, gap);
    gap_sum += gap;
    ++audit.qualified_pairs;
  }
  audit.mean_gap =
      audit.qualified_pairs > 0 ? gap_sum / static_cast<double>(audit.qualified_pairs) : 0.0;

  int pair = 0;
  for (int s = 0; s < mdp.n_states; ++s) {
    const int actions = mdp.n_actions[s];
    bool all_qualified = true;
    int learned_best = 0;
    double learned_val = 0.0, star_min = 0.0;
    for (int a = 0; a < actions; ++a) {
      const int k = pair + a;
      if (pair_visits[k] < min_visits) all_qualified = false;
      if (a == 0 || learned[k] < learned_val) {
        learned_val = learned[k];
        learned_best = a;
      }
      if (a == 0 || q_star[k] < star_min) star_min = q_star[k];
    }
    if (all_qualified) {
      ++audit.compared_states;
      const double regret = q_star[pair + learned_best] - star_min;
      audit.max_policy_regret = std::max(audit.max_policy_regret, regret);
      if (regret <= 1e-9 * (1.0 + std::abs(star_min))) ++audit.agreeing_states;
    }
    pair += actions;
  }
  audit.policy_agreement =
      audit.compared_states > 0
          ? static_cast<double>(audit.agreeing_states) / static_cast<double>(audit.compared_states)
          : 0.0;
  return audit;
}

MdpLearnResult q_learning_on_mdp(const ExplicitMDP& mdp, const MdpLearnConfig& config,
                                 const RngStream& root) {
  mdp.validate();
  for (int n : mdp.n_actions)
    if (n != mdp.n_actions[0])
      throw std::invalid_argument("learning on an explicit process needs a uniform action count");
  if (config.updates < 1) throw std::invalid_argument("need at least one update");

  const int n_actions = mdp.n_actions[0];
  MdpLearnResult result;
  result.table = QTable(0, mdp.n_states, n_actions, config.q_init);
  result.visits = VisitCounters(mdp.n_states, n_actions);
  result.sup_norm = std::abs(config.q_init);

  RngStream sim = root.substream("simulation");
  RngStream exploration = root.substream("exploration");
  const DiscountFactor discount(mdp.discount);

  int state = 0;
  for (long t = 0; t < config.updates; ++t) {
    if (config.restart_every > 0 && t % config.restart_every == 0)
      state = exploration.uniform_int(0, mdp.n_states - 1);

    int action;
    if (config.exploration.kind == ExplorationKind::Ucb) {
      action = select_action_ucb(result.table, state, result.visits);
    } else {
      action = select_action_epsilon(result.table, state, config.exploration.epsilon.at(t),
                                     exploration);
    }

    const int pair = mdp.pair_index(state, action);
    const double cost = sample_cost(mdp, pair, sim);
    const int next = sample_next_state(mdp, pair, sim);
    const long count =
        config.per_pair_steps ? result.visits.pair_visits(state, action) : t;
    const double q_after =
        q_update(result.table, state, action, cost, next, config.schedule.at(count), discount);
    result.visits.record(state, action);
    result.sup_norm = std::max(result.sup_norm, std::abs(q_after));
    state = next;
  }
  return result;
}

}  // namespace tsc

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tsc/oracle.hpp"
#include "tsc/qlearn.hpp"
#include "tsc/rng.hpp"

namespace tsc {

/// Verdict on the two classical step-size conditions: the partial sums
/// must diverge while the squared steps stay summable.
struct ScheduleAudit {
  bool divergent_sum = false;
  bool square_summable = false;
  std::string reason;

  bool ok() const { return divergent_sum && square_summable; }
};

ScheduleAudit check_step_schedule(const StepSchedule& schedule);

using QOperator = std::function<QVector(const QVector&)>;

struct ContractionEstimate {
  double modulus = 0.0;  // largest observed ||F(a)-F(b)|| / ||a-b||
  int trials = 0;
};

/// Probes an operator with random vector pairs (entries uniform on
/// [-scale, scale]) and reports the worst expansion ratio in the sup norm.
/// A lower bound on the true Lipschitz modulus, tight in practice.
ContractionEstimate estimate_contraction(const QOperator& op, int dim, int trials, double scale,
                                         RngStream& rng);

/// Per state-action group statistics of the update noise
/// w = cost + discount * min_b q(next, b) - E[the same]. A group passes
/// the mean test when its sample mean straddles zero within three
/// standard errors, and the moment test when its second moment stays
/// under the group's variance bound plus three standard errors of slack.
struct NoiseAudit {
  long groups = 0;   // groups with enough samples
  long samples = 0;  // total draws across those groups
  double mean = 0.0;     // pooled mean over all draws
  double mean_se = 0.0;
  long zero_mean_groups = 0;
  long bounded_groups = 0;
  double zero_mean_fraction = 0.0;
  double bounded_fraction = 0.0;
  double max_abs_z = 0.0;      // worst group |mean| / se
  double worst_excess = 0.0;   // worst group (second moment - bound - slack)
  bool zero_mean_ok = false;      // fraction >= 0.95
  bool second_moment_ok = false;  // every group bounded
};

/// Samples the noise per pair of an explicit process, with the cost and
/// the next state drawn independently and the exact operator as baseline.
/// The per-group variance bound is the pair's cost variance plus the
/// squared q range.
NoiseAudit noise_statistics(const ExplicitMDP& mdp, const QVector& q, int samples_per_pair,
                            RngStream& rng);

/// Same audit on a recorded training trace, where no exact baseline is
/// available. Each row's sampled target is recovered from the update
/// identity and centred on the mean of the earlier targets of its
/// state-action group, so the centred sequence is a martingale difference
/// whenever the per-pair target distribution is stable. Groups with fewer
/// than min_group rows are skipped. cost_bound is the largest possible
/// one-step cost; the variance bound is the squared target range over 4.
NoiseAudit noise_statistics(const TrainingTrace& trace, double cost_bound, double discount,
                            long min_group = 100);

struct BoundednessAudit {
  double bound = 0.0;     // cost_bound / (1 - discount)
  double initial_norm = 0.0;
  double envelope = 0.0;  // max(bound, initial_norm)
  double sup_norm = 0.0;  // largest table norm along the trace
  long rows = 0;
  bool within_envelope = false;
  bool within_bound = false;
};

/// Checks that the table sup norm never escapes
/// max(initial norm, cost_bound / (1 - discount)) along a trace. A table
/// started inside the bound must stay inside it; one started outside may
/// not grow.
BoundednessAudit boundedness_audit(const TrainingTrace& trace, double initial_norm,
                                   double cost_bound, double discount);

struct DriftFieldAudit {
  std::vector<double> estimated;  // per pair
  std::vector<double> exact;      // per pair: (Fq)(k) - q(k)
  std::vector<double> se;         // per pair standard error
  double max_abs_error = 0.0;
  double max_se = 0.0;
  double max_z = 0.0;             // worst |error| / se over pairs
  double within_fraction = 0.0;   // pairs with |error| <= 3 se
  bool consistent = false;        // fraction >= 0.95 and max_z <= 6
};

/// Estimates the expected update direction h(q) = F(q) - q pairwise by
/// sampling and compares it against the exact operator. With many pairs
/// a few three-sigma excursions are expected, so the verdict asks for 95%
/// of pairs inside three standard errors and none beyond six.
DriftFieldAudit drift_field_estimate(const ExplicitMDP& mdp, const QVector& q,
                                     int samples_per_pair, RngStream& rng);

struct JacobianSignAudit {
  int dim = 0;
  long boundary_columns = 0;  // probe crossed a greedy-action switch
  long negative_diagonal = 0;
  long offdiagonal_nonnegative = 0;
  long offdiagonal_violations = 0;
  double max_diagonal = 0.0;     // largest diagonal entry seen (want < 0)
  double min_offdiagonal = 0.0;  // smallest off-diagonal entry seen
  bool cooperative = false;
};

/// Central-difference Jacobian of the drift h(q) = F(q) - q, probed one
/// coordinate at a time with delta = delta_scale * (1 + ||q||). Away from
/// greedy-action switches the structure must be cooperative: strictly
/// negative diagonal, non-negative off-diagonal. Columns whose probe
/// interval straddles a switch are excluded from the sign counts and
/// reported as boundary columns. Diagnostic, not a proof.
JacobianSignAudit cooperative_jacobian_signs(const ExplicitMDP& mdp, const QVector& q,
                                             double delta_scale = 1e-3);

struct OracleGapAudit {
  double max_gap = 0.0;   // over qualified pairs
  double mean_gap = 0.0;
  long qualified_pairs = 0;
  long total_pairs = 0;
  long compared_states = 0;  // states whose every pair qualified
  long agreeing_states = 0;  // learned greedy action exactly optimal
  double policy_agreement = 0.0;
  /// Worst q*(s, learned greedy) - min_a q*(s, a) over compared states.
  /// Robust where exact agreement is not: near-ties flip the argmin but
  /// cost almost nothing.
  double max_policy_regret = 0.0;
};

/// Compares a learned table (flattened state-major) against the fixed
/// point from the planning side. Only pairs visited at least min_visits
/// times enter the gap; a state's policy is compared once every one of
/// its pairs qualifies.
OracleGapAudit oracle_gap(const QVector& learned, const std::vector<long>& pair_visits,
                          const ExplicitMDP& mdp, const QVector& q_star, long min_visits = 100);

struct MdpLearnConfig {
  long updates = 100000;
  StepSchedule schedule = StepSchedule::harmonic();
  bool per_pair_steps = true;
  ExplorationPolicy exploration{ExplorationKind::Ucb, {}};
  /// Teleport to a uniformly random state every restart_every updates so
  /// rarely-reached states keep collecting visits. Zero disables it.
  long restart_every = 50;
  double q_init = 0.0;
};

struct MdpLearnResult {
  QTable table;  // junction field unused here
  VisitCounters visits;
  double sup_norm = 0.0;  // largest entry magnitude ever held by the table
};

/// Runs tabular learning directly on an explicit process along a single
/// trajectory of sampled transitions. Requires a uniform action count.
MdpLearnResult q_learning_on_mdp(const ExplicitMDP& mdp, const MdpLearnConfig& config,
                                 const RngStream& root);

}  // namespace tsc

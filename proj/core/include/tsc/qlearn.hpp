#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tsc/discretize.hpp"
#include "tsc/network.hpp"
#include "tsc/rng.hpp"
#include "tsc/sim.hpp"

namespace tsc {

/// Discount factor, open interval (0, 1). Construction validates.
struct DiscountFactor {
  double value;
  explicit DiscountFactor(double v);
};

/// Dense table of action values for one controller.
struct QTable {
  int junction = 0;
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> values;  // row-major [state][action]

  QTable() = default;
  QTable(int junction, int n_states, int n_actions, double initial = 0.0);

  double& at(int state, int action);
  double at(int state, int action) const;
  double min_over_actions(int state) const;
  /// Lowest-value action; ties break to the lowest action index.
  int argmin_action(int state) const;
  double inf_norm() const;
};

/// Learning-rate sequence. Harmonic is 1/(t + offset), PolynomialDecay is
/// 1/(t + 1)^exponent, Constant ignores t.
struct StepSchedule {
  enum class Kind { Harmonic, PolynomialDecay, Constant };

  Kind kind = Kind::Harmonic;
  double offset = 1.0;
  double exponent = 1.0;
  double constant = 0.1;

  static StepSchedule harmonic(double offset = 1.0);
  static StepSchedule polynomial(double exponent);
  static StepSchedule constant_rate(double value);

  /// Step size for the t-th update of a state-action pair, t counted from 0.
  double at(long t) const;

  std::string to_text() const;              // e.g. "harmonic 1"
  static StepSchedule from_text(const std::string& text);
};

/// Visit counters for one table: per state and per state-action pair.
struct VisitCounters {
  std::vector<long> state;
  std::vector<long> pair;  // row-major like QTable::values
  int n_actions = 0;

  VisitCounters() = default;
  VisitCounters(int n_states, int n_actions);
  long state_visits(int s) const { return state[s]; }
  long pair_visits(int s, int a) const { return pair[static_cast<size_t>(s) * n_actions + a]; }
  void record(int s, int a);
};

struct EpsilonGreedy {
  double epsilon0 = 1.0;
  double decay_rate = 1e-3;
  double floor = 0.01;
  double at(long t) const;
};

enum class ExplorationKind { EpsilonGreedy, Ucb };

struct ExplorationPolicy {
  ExplorationKind kind = ExplorationKind::EpsilonGreedy;
  EpsilonGreedy epsilon;
};

/// One tabular update toward cost + discount * min_b Q(next, b), computed
/// in the convex-combination form (1-step)*old + step*target so the
/// identity with that form is exact in floating point. Returns the new
/// entry. step must lie in (0, 1]; a zero step would silently learn
/// nothing and is rejected.
double q_update(QTable& table, int state, int action, double cost, int next_state, double step,
                DiscountFactor discount);

/// Epsilon-greedy selection: explore uniformly with probability epsilon,
/// otherwise take argmin_action.
int select_action_epsilon(const QTable& table, int state, double epsilon, RngStream& rng);

/// Upper-confidence selection over costs: any never-tried action first
/// (lowest index), otherwise argmax of -Q(s,c) + ln(R_s)/R_{s,c}.
int select_action_ucb(const QTable& table, int state, const VisitCounters& visits);

struct TraceRow {
  long t = 0;
  int junction = 0;
  int state = 0;
  int action = 0;
  double cost = 0.0;
  int next_state = 0;
  double gamma = 0.0;  // step size actually applied
  double q_before = 0.0;
  double q_after = 0.0;
  double q_norm_after = 0.0;  // inf-norm of this agent's table after the update
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
};

std::string trace_csv_header();
void append_trace_csv(std::ostream& out, const TraceRow& row);
std::string serialize_trace(const TrainingTrace& trace);
/// Parses a trace CSV. q_norm_after is not stored in the file; it is
/// reconstructed by replaying entries from q_init per (junction, state,
/// action) table of the given shape.
TrainingTrace parse_trace(const std::string& text, const std::vector<QTable>& initial_tables);

struct EpisodeConfig {
  double d1 = 5.0;
  double d2 = 10.0;
  std::vector<double> action_durations{10.0, 20.0, 30.0};
  DiscountFactor discount{0.9};
  StepSchedule schedule;
  /// Step index fed to the schedule: per state-action visit count when
  /// true, global cycle count when false.
  bool per_pair_steps = true;
  ExplorationPolicy exploration;
  long cycles = 0;
  double q_init = 0.0;
  /// Optional sink for per-cycle flow reports (streamed, not stored).
  std::function<void(const CycleReport&)> on_cycle;
};

struct EpisodeResult {
  std::vector<QTable> tables;
  std::vector<VisitCounters> visits;
  TrainingTrace trace;
  GreenSchedule final_schedule;
  double mean_cost = 0.0;  // over all agents and cycles
  long total_blocked = 0;
  double sup_q_norm = 0.0;  // max inf-norm seen across agents and time
};

/// Runs independent Q-learning controllers, one per junction, against a
/// shared simulation. Each cycle every controller observes its local
/// discretized state, chooses the duration of its currently active phase
/// (other phases keep their previous durations), the whole network runs one
/// cycle, and the controller pays its neighborhood cost and updates its
/// table. Active phases rotate round-robin so every phase's duration is
/// revisited every P cycles.
///
/// `tables` supplies starting values and must match the network's shape;
/// pass build_tables(...) for a fresh start. Randomness: substreams
/// "simulation" and "exploration" of the given stream.
EpisodeResult run_marl_episode(const TrafficNetwork& net, std::vector<QTable> tables,
                               const EpisodeConfig& config, const RngStream& root);

/// Fresh zero-initialised tables shaped for the network.
std::vector<QTable> build_tables(const TrafficNetwork& net, int n_actions, double q_init = 0.0);

/// Greedy (min-cost) action per state.
std::vector<int> greedy_policy(const QTable& table);

/// Snapshot of one table with everything needed to reuse it: shape,
/// action durations, discount and step schedule. Round-trips bit-exactly.
std::string serialize_qtable(const QTable& table, int lanes, int phases,
                             const std::vector<double>& action_durations, DiscountFactor discount,
                             const StepSchedule& schedule);

struct QTableSnapshot {
  QTable table;
  int lanes = 0;
  int phases = 0;
  std::vector<double> action_durations;
  double discount = 0.0;
  StepSchedule schedule;
};

QTableSnapshot parse_qtable(const std::string& text);

void write_qtable_file(const std::string& path, const QTable& table, int lanes, int phases,
                       const std::vector<double>& action_durations, DiscountFactor discount,
                       const StepSchedule& schedule);
QTableSnapshot read_qtable_file(const std::string& path);

}  // namespace tsc

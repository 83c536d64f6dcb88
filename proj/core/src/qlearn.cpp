#include "tsc/qlearn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "tsc/textio.hpp"

namespace tsc {

DiscountFactor::DiscountFactor(double v) : value(v) {
  if (!(v > 0.0) || !(v < 1.0))
    throw std::invalid_argument("discount factor must lie in (0, 1), got " + format_double(v));
}

QTable::QTable(int junction, int n_states, int n_actions, double initial)
    : junction(junction), n_states(n_states), n_actions(n_actions) {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("table needs at least one state and one action");
  values.assign(static_cast<size_t>(n_states) * n_actions, initial);
}

double& QTable::at(int state, int action) {
  if (state < 0 || state >= n_states || action < 0 || action >= n_actions)
    throw std::out_of_range("table entry (" + std::to_string(state) + ", " +
                            std::to_string(action) + ") out of range");
  return values[static_cast<size_t>(state) * n_actions + action];
}

double QTable::at(int state, int action) const {
  return const_cast<QTable*>(this)->at(state, action);
}

double QTable::min_over_actions(int state) const {
  double best = at(state, 0);
  for (int a = 1; a < n_actions; ++a) best = std::min(best, at(state, a));
  return best;
}

int QTable::argmin_action(int state) const {
  int best = 0;
  for (int a = 1; a < n_actions; ++a)
    if (at(state, a) < at(state, best)) best = a;
  return best;
}

double QTable::inf_norm() const {
  double n = 0.0;
  for (double v : values) n = std::max(n, std::abs(v));
  return n;
}

StepSchedule StepSchedule::harmonic(double offset) {
  if (!(offset > 0)) throw std::invalid_argument("harmonic offset must be positive");
  StepSchedule s;
  s.kind = Kind::Harmonic;
  s.offset = offset;
  return s;
}

StepSchedule StepSchedule::polynomial(double exponent) {
  if (!(exponent > 0)) throw std::invalid_argument("decay exponent must be positive");
  StepSchedule s;
  s.kind = Kind::PolynomialDecay;
  s.exponent = exponent;
  return s;
}

StepSchedule StepSchedule::constant_rate(double value) {
  if (!(value > 0) || value > 1) throw std::invalid_argument("constant step must lie in (0, 1]");
  StepSchedule s;
  s.kind = Kind::Constant;
  s.constant = value;
  return s;
}

double StepSchedule::at(long t) const {
  if (t < 0) throw std::invalid_argument("step index must be >= 0");
  switch (kind) {
    case Kind::Harmonic:
      return 1.0 / (static_cast<double>(t) + offset);
    case Kind::PolynomialDecay:
      return std::pow(static_cast<double>(t) + 1.0, -exponent);
    case Kind::Constant:
      return constant;
  }
  throw std::logic_error("unreachable");
}

std::string StepSchedule::to_text() const {
  switch (kind) {
    case Kind::Harmonic:
      return "harmonic " + format_double(offset);
    case Kind::PolynomialDecay:
      return "polynomial " + format_double(exponent);
    case Kind::Constant:
      return "constant " + format_double(constant);
  }
  throw std::logic_error("unreachable");
}

StepSchedule StepSchedule::from_text(const std::string& text) {
  const auto tokens = split_ws(text);
  if (tokens.size() != 2) throw std::invalid_argument("bad step schedule: '" + text + "'");
  const double v = parse_double(tokens[1]);
  if (tokens[0] == "harmonic") return harmonic(v);
  if (tokens[0] == "polynomial") return polynomial(v);
  if (tokens[0] == "constant") return constant_rate(v);
  throw std::invalid_argument("unknown step schedule kind '" + tokens[0] + "'");
}

VisitCounters::VisitCounters(int n_states, int n_actions) : n_actions(n_actions) {
  state.assign(n_states, 0);
  pair.assign(static_cast<size_t>(n_states) * n_actions, 0);
}

void VisitCounters::record(int s, int a) {
  state.at(s) += 1;
  pair.at(static_cast<size_t>(s) * n_actions + a) += 1;
}

double EpsilonGreedy::at(long t) const {
  if (t < 0) throw std::invalid_argument("time index must be >= 0");
  return std::max(floor, epsilon0 * std::exp(-decay_rate * static_cast<double>(t)));
}

double q_update(QTable& table, int state, int action, double cost, int next_state, double step,
                DiscountFactor discount) {
  if (!(step > 0.0) || step > 1.0)
    throw std::invalid_argument("step size must lie in (0, 1], got " + format_double(step));
  if (next_state < 0 || next_state >= table.n_states)
    throw std::out_of_range("next state " + std::to_string(next_state) + " out of range");
  double& entry = table.at(state, action);
  const double target = cost + discount.value * table.min_over_actions(next_state);
  entry = (1.0 - step) * entry + step * target;
  return entry;
}

int select_action_epsilon(const QTable& table, int state, double epsilon, RngStream& rng) {
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("epsilon outside [0, 1]: " + format_double(epsilon));
  if (epsilon > 0.0 && rng.uniform01() < epsilon)
    return rng.uniform_int(0, table.n_actions - 1);
  return table.argmin_action(state);
}

int select_action_ucb(const QTable& table, int state, const VisitCounters& visits) {
  for (int a = 0; a < table.n_actions; ++a)
    if (visits.pair_visits(state, a) == 0) return a;
  const double log_state = std::log(static_cast<double>(visits.state_visits(state)));
  int best = 0;
  double best_score = 0.0;
  for (int a = 0; a < table.n_actions; ++a) {
    const double score =
        -table.at(state, a) + log_state / static_cast<double>(visits.pair_visits(state, a));
    if (a == 0 || score > best_score) {
      best = a;
      best_score = score;
    }
  }
  return best;
}

std::string trace_csv_header() {
  return "t,junction,state,action,cost,next_state,gamma,q_before,q_after";
}

void append_trace_csv(std::ostream& out, const TraceRow& row) {
  out << row.t << ',' << row.junction << ',' << row.state << ',' << row.action << ','
      << format_double(row.cost) << ',' << row.next_state << ',' << format_double(row.gamma) << ','
      << format_double(row.q_before) << ',' << format_double(row.q_after) << '\n';
}

std::string serialize_trace(const TrainingTrace& trace) {
  std::ostringstream out;
  out << trace_csv_header() << '\n';
  for (const auto& row : trace.rows) append_trace_csv(out, row);
  return out.str();
}

TrainingTrace parse_trace(const std::string& text, const std::vector<QTable>& initial_tables) {
  std::map<int, QTable> tables;
  std::map<int, double> norms;
  for (const auto& t : initial_tables) {
    tables.emplace(t.junction, t);
    norms[t.junction] = t.inf_norm();
  }

  TrainingTrace trace;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != trace_csv_header())
    throw std::invalid_argument("trace is missing the expected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw std::invalid_argument("malformed trace row: '" + line + "'");
    TraceRow row;
    row.t = parse_long(f[0]);
    row.junction = static_cast<int>(parse_long(f[1]));
    row.state = static_cast<int>(parse_long(f[2]));
    row.action = static_cast<int>(parse_long(f[3]));
    row.cost = parse_double(f[4]);
    row.next_state = static_cast<int>(parse_long(f[5]));
    row.gamma = parse_double(f[6]);
    row.q_before = parse_double(f[7]);
    row.q_after = parse_double(f[8]);

    auto it = tables.find(row.junction);
    if (it == tables.end())
      throw std::invalid_argument("trace row for unknown junction " + std::to_string(row.junction));
    QTable& table = it->second;
    double& entry = table.at(row.state, row.action);
    const double old_norm_source = std::abs(entry);
    entry = row.q_after;
    double& norm = norms[row.junction];
    if (std::abs(entry) >= norm) {
      norm = std::abs(entry);
    } else if (old_norm_source >= norm) {
      norm = table.inf_norm();  // the maximal entry shrank; rescan
    }
    row.q_norm_after = norm;
    trace.rows.push_back(row);
  }
  return trace;
}

std::vector<QTable> build_tables(const TrafficNetwork& net, int n_actions, double q_init) {
  std::vector<QTable> tables;
  for (const auto& j : net.junctions) {
    StateSpace space(static_cast<int>(j.incoming_lanes.size()),
                     static_cast<int>(j.phases.size()));
    tables.emplace_back(j.id, space.size(), n_actions, q_init);
  }
  return tables;
}

std::vector<int> greedy_policy(const QTable& table) {
  std::vector<int> policy(table.n_states);
  for (int s = 0; s < table.n_states; ++s) policy[s] = table.argmin_action(s);
  return policy;
}

EpisodeResult run_marl_episode(const TrafficNetwork& net, std::vector<QTable> tables,
                               const EpisodeConfig& config, const RngStream& root) {
  if (config.action_durations.empty())
    throw std::invalid_argument("need at least one action duration");
  if (!(config.d1 > 0) || !(config.d2 > config.d1))
    throw std::invalid_argument("occupancy thresholds must satisfy 0 < d1 < d2");

  const int n_actions = static_cast<int>(config.action_durations.size());
  std::map<int, size_t> agent_of;  // junction id -> index into tables
  for (size_t i = 0; i < tables.size(); ++i) agent_of[tables[i].junction] = i;
  for (const auto& j : net.junctions) {
    auto it = agent_of.find(j.id);
    if (it == agent_of.end())
      throw std::invalid_argument("no table for junction " + std::to_string(j.id));
    StateSpace space(static_cast<int>(j.incoming_lanes.size()),
                     static_cast<int>(j.phases.size()));
    const QTable& t = tables[it->second];
    if (t.n_states != space.size() || t.n_actions != n_actions)
      throw std::invalid_argument("table shape mismatch for junction " + std::to_string(j.id));
  }

  Simulation sim(net, root.substream("simulation"));
  RngStream explore = root.substream("exploration");

  // The medium duration is the default before any decision touches a phase.
  const double default_duration = config.action_durations[(n_actions - 1) / 2];
  GreenSchedule schedule = GreenSchedule::uniform(net, default_duration);

  EpisodeResult result;
  result.visits.reserve(tables.size());
  for (const auto& t : tables) result.visits.emplace_back(t.n_states, t.n_actions);

  std::map<int, int> active_phase;
  std::map<int, double> norm;  // running inf-norm per agent
  double sup_norm = 0.0;
  for (const auto& t : tables) {
    active_phase[t.junction] = 1;
    norm[t.junction] = t.inf_norm();
    sup_norm = std::max(sup_norm, norm[t.junction]);
  }

  double cost_sum = 0.0;
  long cost_count = 0;
  long blocked = 0;

  struct Decision {
    int state = 0;
    int action = 0;
    long pair_visits_before = 0;
  };

  for (long t = 0; t < config.cycles; ++t) {
    std::map<int, Decision> decisions;
    auto counts = sim.counts_by_lane();
    for (const auto& j : net.junctions) {
      const size_t idx = agent_of[j.id];
      QTable& table = tables[idx];
      VisitCounters& visits = result.visits[idx];
      StateSpace space(static_cast<int>(j.incoming_lanes.size()),
                       static_cast<int>(j.phases.size()));

      const int s = space.index(
          observe_state(net, counts, j.id, active_phase[j.id], config.d1, config.d2));
      int a;
      if (config.exploration.kind == ExplorationKind::EpsilonGreedy)
        a = select_action_epsilon(table, s, config.exploration.epsilon.at(t), explore);
      else
        a = select_action_ucb(table, s, visits);

      decisions[j.id] = {s, a, visits.pair_visits(s, a)};
      visits.record(s, a);
      schedule.set(j.id, active_phase[j.id], config.action_durations[a]);
    }

    const CycleReport report = sim.advance_cycle(schedule);
    if (config.on_cycle) config.on_cycle(report);
    for (const auto& r : report.lanes) blocked += r.blocked;

    counts = sim.counts_by_lane();
    for (const auto& j : net.junctions) {
      const size_t idx = agent_of[j.id];
      QTable& table = tables[idx];
      const Decision& d = decisions[j.id];
      StateSpace space(static_cast<int>(j.incoming_lanes.size()),
                       static_cast<int>(j.phases.size()));

      const int next_phase = active_phase[j.id] % static_cast<int>(j.phases.size()) + 1;
      const int s_next =
          space.index(observe_state(net, counts, j.id, next_phase, config.d1, config.d2));
      const CostSignal cost = neighborhood_cost(net, counts, j.id, config.d1, config.d2, t);
      cost_sum += cost.value;
      cost_count += 1;

      const double gamma = config.schedule.at(config.per_pair_steps ? d.pair_visits_before : t);
      const double before = table.at(d.state, d.action);
      const double after =
          q_update(table, d.state, d.action, cost.value, s_next, gamma, config.discount);

      double& agent_norm = norm[j.id];
      if (std::abs(after) >= agent_norm) {
        agent_norm = std::abs(after);
      } else if (std::abs(before) >= agent_norm) {
        agent_norm = table.inf_norm();
      }
      sup_norm = std::max(sup_norm, agent_norm);

      result.trace.rows.push_back(
          {t, j.id, d.state, d.action, cost.value, s_next, gamma, before, after, agent_norm});
      active_phase[j.id] = next_phase;
    }
  }

  result.tables = std::move(tables);
  result.final_schedule = schedule;
  result.mean_cost = cost_count ? cost_sum / static_cast<double>(cost_count) : 0.0;
  result.total_blocked = blocked;
  result.sup_q_norm = sup_norm;
  return result;
}

namespace {

constexpr const char* kQTableMagic = "tsc-qtable v1";

}

std::string serialize_qtable(const QTable& table, int lanes, int phases,
                             const std::vector<double>& action_durations, DiscountFactor discount,
                             const StepSchedule& schedule) {
  if (static_cast<int>(action_durations.size()) != table.n_actions)
    throw std::invalid_argument("action durations must match the table's action count");
  std::ostringstream out;
  out << kQTableMagic << '\n';
  out << "junction " << table.junction << '\n';
  out << "lanes " << lanes << '\n';
  out << "phases " << phases << '\n';
  out << "states " << table.n_states << '\n';
  out << "actions";
  for (double d : action_durations) out << ' ' << format_double(d);
  out << '\n';
  out << "discount " << format_double(discount.value) << '\n';
  out << "schedule " << schedule.to_text() << '\n';
  out << "entries " << table.n_states * table.n_actions << '\n';
  for (int s = 0; s < table.n_states; ++s)
    for (int a = 0; a < table.n_actions; ++a)
      out << s << ' ' << a << ' ' << format_double(table.at(s, a)) << '\n';
  return out.str();
}

QTableSnapshot parse_qtable(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line))
      throw std::invalid_argument(std::string("table snapshot truncated before ") + what);
    return split_ws(line);
  };

  if (!std::getline(in, line) || line != kQTableMagic)
    throw std::invalid_argument("not a table snapshot (missing magic line)");

  QTableSnapshot snap;
  auto f = next_line("junction");
  if (f.size() != 2 || f[0] != "junction") throw std::invalid_argument("expected junction line");
  const int junction = static_cast<int>(parse_long(f[1]));
  f = next_line("lanes");
  if (f.size() != 2 || f[0] != "lanes") throw std::invalid_argument("expected lanes line");
  snap.lanes = static_cast<int>(parse_long(f[1]));
  f = next_line("phases");
  if (f.size() != 2 || f[0] != "phases") throw std::invalid_argument("expected phases line");
  snap.phases = static_cast<int>(parse_long(f[1]));
  f = next_line("states");
  if (f.size() != 2 || f[0] != "states") throw std::invalid_argument("expected states line");
  const int n_states = static_cast<int>(parse_long(f[1]));
  f = next_line("actions");
  if (f.size() < 2 || f[0] != "actions") throw std::invalid_argument("expected actions line");
  for (size_t i = 1; i < f.size(); ++i) snap.action_durations.push_back(parse_double(f[i]));
  f = next_line("discount");
  if (f.size() != 2 || f[0] != "discount") throw std::invalid_argument("expected discount line");
  snap.discount = parse_double(f[1]);
  f = next_line("schedule");
  if (f.size() != 3 || f[0] != "schedule") throw std::invalid_argument("expected schedule line");
  snap.schedule = StepSchedule::from_text(f[1] + " " + f[2]);
  f = next_line("entries");
  if (f.size() != 2 || f[0] != "entries") throw std::invalid_argument("expected entries line");
  const long n_entries = parse_long(f[1]);

  snap.table = QTable(junction, n_states, static_cast<int>(snap.action_durations.size()));
  if (n_entries != static_cast<long>(snap.table.values.size()))
    throw std::invalid_argument("entry count does not match the declared shape");
  for (long i = 0; i < n_entries; ++i) {
    f = next_line("table entry");
    if (f.size() != 3) throw std::invalid_argument("malformed table entry: '" + line + "'");
    snap.table.at(static_cast<int>(parse_long(f[0])), static_cast<int>(parse_long(f[1]))) =
        parse_double(f[2]);
  }
  return snap;
}

void write_qtable_file(const std::string& path, const QTable& table, int lanes, int phases,
                       const std::vector<double>& action_durations, DiscountFactor discount,
                       const StepSchedule& schedule) {
  write_text_file(path, serialize_qtable(table, lanes, phases, action_durations, discount, schedule));
}

QTableSnapshot read_qtable_file(const std::string& path) {
  return parse_qtable(read_text_file(path));
}

}  // namespace tsc

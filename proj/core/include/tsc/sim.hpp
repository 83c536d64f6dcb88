#pragma once

#include <iosfwd>
#include <map>
#include <vector>

#include "tsc/network.hpp"
#include "tsc/rng.hpp"

namespace tsc {

/// Queue state of one lane plus its flow counters for the current cycle.
struct LaneState {
  int count = 0;
  long arrivals = 0;    // cars that actually entered this cycle
  long departures = 0;  // cars served out this cycle
  long blocked = 0;     // cars denied entry by capacity this cycle
};

/// Green durations per (junction, phase). Phases are 1-based.
class GreenSchedule {
 public:
  GreenSchedule() = default;

  /// Same duration for every phase of every junction.
  static GreenSchedule uniform(const TrafficNetwork& net, double duration);

  void set(int junction, int phase, double duration);
  double duration(int junction, int phase) const;
  double cycle_time(int junction) const;

 private:
  std::map<int, std::vector<double>> durations_;  // junction -> per phase
};

struct LaneCycleRecord {
  long cycle = 0;
  int junction = 0;
  int lane = 0;
  int before = 0;
  long arrivals = 0;
  long departures = 0;
  long blocked = 0;
  int after = 0;
};

/// Per-lane flow accounting for one full cycle of every junction. The
/// conservation identity after == before + arrivals - departures holds for
/// every record; blocked cars never enter a queue.
struct CycleReport {
  long cycle = 0;
  std::vector<LaneCycleRecord> lanes;
};

std::string cycle_csv_header();
void append_cycle_csv(std::ostream& out, const CycleReport& report);

/// Poisson draw with mean rate * dt. Zero mean returns zero without
/// consuming randomness; negative arguments throw std::invalid_argument.
int sample_poisson_arrivals(double rate, double dt, RngStream& rng);

struct SimClock {
  double t = 0.0;                     // elapsed seconds
  std::map<int, long> cycle_index;    // completed cycles per junction
};

/// Discrete-event queue simulator over a validated TrafficNetwork.
///
/// One cycle runs every junction in ascending id order through its phases
/// in round-robin order. While a phase runs, each lane it serves departs
/// min(count, round(service_rate * duration)) cars; each departing car is
/// routed through the lane's turning distribution and joins the downstream
/// queue unless that queue is at capacity (then it is dropped and counted
/// as blocked). A lane with no downstream connection discharges out of the
/// network.
///
/// External sources generate Poisson arrivals while their lane does not
/// have green; arrivals during the lane's own green phase are treated as
/// passing straight through the junction and never join the queue. Routed
/// (internal) arrivals are accepted during any phase.
class Simulation {
 public:
  Simulation(const TrafficNetwork& net, RngStream rng);

  const TrafficNetwork& network() const { return *net_; }
  const SimClock& clock() const { return clock_; }

  int count(int lane_id) const;
  void set_count(int lane_id, int count);

  /// Raw counts indexed by lane id (size = max id + 1).
  std::vector<int> counts_by_lane() const;

  /// Runs one phase of one junction. Exposed for tests; advance_cycle is
  /// the normal driver. Throws std::out_of_range on unknown references and
  /// std::invalid_argument on a non-positive duration.
  void step_phase(int junction_id, int phase, double duration);

  /// Runs one full cycle for every junction and reports per-lane flows.
  CycleReport advance_cycle(const GreenSchedule& schedule);

  /// Fraction of offered green service actually used by the lane since
  /// construction (served / round(service_rate * duration) summed over its
  /// green phases). Estimates the probability that the lane is non-empty
  /// when served. Returns 0 before the lane ever had green.
  double occupancy_probability(int lane_id) const;

  long total_blocked() const;

 private:
  struct LaneRuntime {
    LaneState state;
    int capacity = 0;
    double arrival_rate = 0.0;
    double service_rate = 0.0;
    int junction = 0;
    bool external = false;
    // downstream routing, cumulative alpha for inverse-CDF sampling
    std::vector<int> route_lane;
    std::vector<double> route_cumulative;
    long green_offered = 0;
    long green_served = 0;
  };

  LaneRuntime& lane_at(int lane_id);
  const LaneRuntime& lane_at(int lane_id) const;
  void route_departure(LaneRuntime& from);

  const TrafficNetwork* net_;
  RngStream rng_;
  SimClock clock_;
  std::map<int, LaneRuntime> lanes_;
  std::map<int, const JunctionSpec*> junctions_;
};

/// Closed-form expected one-cycle queue change for a lane under the given
/// schedule. occupancy_probs maps lane id to its probability of being
/// non-empty when served; every lane involved must be present. External
/// lanes accumulate arrivals over their red time and lose service over
/// their green time; internal lanes balance routed inflow from their
/// feeders against their own service.
double expected_queue_drift(const TrafficNetwork& net, int lane_id, const GreenSchedule& schedule,
                            const std::map<int, double>& occupancy_probs);

enum class DriftConditionForm {
  Text,           // arrival_rate - service_rate + p_busy * service_rate
  AlphaWeighted,  // re-arrival term scaled by the lane's first turning probability
};

/// Signed growth coefficient of an external lane's contribution to the
/// neighborhood cost as its green time grows. Negative means more green
/// time reduces the expected cost, positive means it increases it.
/// Internal lanes are not covered by this condition and throw
/// std::invalid_argument.
double drift_sign_condition(const TrafficNetwork& net, int lane_id,
                            const std::map<int, double>& occupancy_probs,
                            DriftConditionForm form = DriftConditionForm::Text);

}  // namespace tsc

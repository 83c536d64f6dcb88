#pragma once

#include <vector>

#include "tsc/network.hpp"

namespace tsc {

/// Coarse queue occupancy: 0 below d1, 1 in [d1, d2), 2 at or above d2.
enum class OccupancyLevel : int { Low = 0, Medium = 1, High = 2 };

constexpr int kOccupancyLevels = 3;

/// Maps a raw queue count to its occupancy level. Thresholds must satisfy
/// 0 < d1 < d2; anything else throws std::invalid_argument.
OccupancyLevel discretize_lane(int count, double d1, double d2);

/// What one junction's controller can see: the occupancy level of each of
/// its incoming lanes (in incoming_lanes order) plus which phase its next
/// decision applies to.
struct DiscretizedState {
  std::vector<OccupancyLevel> occupancies;
  int active_phase = 1;  // 1-based

  bool operator==(const DiscretizedState&) const = default;
};

/// Bijection between DiscretizedState and the dense index range
/// [0, 3^lanes * phases). Occupancies form the low mixed-radix digits
/// (first lane least significant); the phase selects the block.
struct StateSpace {
  int lanes = 0;
  int phases = 0;

  StateSpace() = default;
  StateSpace(int lanes, int phases);

  int size() const;
  int index(const DiscretizedState& s) const;
  DiscretizedState decode(int index) const;
};

/// Observes the discretized state of one junction from raw lane counts.
/// `counts_by_lane` is indexed by lane id.
DiscretizedState observe_state(const TrafficNetwork& net, const std::vector<int>& counts_by_lane,
                               int junction_id, int active_phase, double d1, double d2);

struct CostSignal {
  double value = 0.0;
  int junction = 0;
  long cycle = 0;
};

/// One-step cost for a junction: the total discretized occupancy of every
/// junction in its neighborhood, averaged over the neighborhood size.
CostSignal neighborhood_cost(const TrafficNetwork& net, const std::vector<int>& counts_by_lane,
                             int junction_id, double d1, double d2, long cycle = 0);

/// Largest value neighborhood_cost can return for any junction of the
/// network (every lane at its highest occupancy level).
double max_neighborhood_cost(const TrafficNetwork& net);

}  // namespace tsc

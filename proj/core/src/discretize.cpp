#include "tsc/discretize.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace tsc {

OccupancyLevel discretize_lane(int count, double d1, double d2) {
  if (!(d1 > 0) || !(d2 > d1))
    throw std::invalid_argument("occupancy thresholds must satisfy 0 < d1 < d2");
  if (count < d1) return OccupancyLevel::Low;
  if (count < d2) return OccupancyLevel::Medium;
  return OccupancyLevel::High;
}

StateSpace::StateSpace(int lanes, int phases) : lanes(lanes), phases(phases) {
  if (lanes < 1 || phases < 1)
    throw std::invalid_argument("state space needs at least one lane and one phase");
}

int StateSpace::size() const {
  int n = phases;
  for (int i = 0; i < lanes; ++i) n *= kOccupancyLevels;
  return n;
}

int StateSpace::index(const DiscretizedState& s) const {
  if (static_cast<int>(s.occupancies.size()) != lanes)
    throw std::invalid_argument("state has " + std::to_string(s.occupancies.size()) +
                                " occupancies, expected " + std::to_string(lanes));
  if (s.active_phase < 1 || s.active_phase > phases)
    throw std::invalid_argument("active phase " + std::to_string(s.active_phase) +
                                " outside [1, " + std::to_string(phases) + "]");
  int occ = 0;
  int radix = 1;
  for (int i = 0; i < lanes; ++i) {
    occ += static_cast<int>(s.occupancies[i]) * radix;
    radix *= kOccupancyLevels;
  }
  return (s.active_phase - 1) * radix + occ;
}

DiscretizedState StateSpace::decode(int index) const {
  if (index < 0 || index >= size())
    throw std::out_of_range("state index " + std::to_string(index) + " outside [0, " +
                            std::to_string(size()) + ")");
  DiscretizedState s;
  int block = 1;
  for (int i = 0; i < lanes; ++i) block *= kOccupancyLevels;
  s.active_phase = index / block + 1;
  int occ = index % block;
  for (int i = 0; i < lanes; ++i) {
    s.occupancies.push_back(static_cast<OccupancyLevel>(occ % kOccupancyLevels));
    occ /= kOccupancyLevels;
  }
  return s;
}

namespace {

int count_of(const std::vector<int>& counts_by_lane, int lane_id) {
  if (lane_id < 0 || lane_id >= static_cast<int>(counts_by_lane.size()))
    throw std::out_of_range("no count for lane id " + std::to_string(lane_id));
  return counts_by_lane[lane_id];
}

}  // namespace

DiscretizedState observe_state(const TrafficNetwork& net, const std::vector<int>& counts_by_lane,
                               int junction_id, int active_phase, double d1, double d2) {
  const JunctionSpec* j = net.find_junction(junction_id);
  if (!j) throw std::out_of_range("unknown junction id " + std::to_string(junction_id));
  DiscretizedState s;
  s.active_phase = active_phase;
  for (int lane : j->incoming_lanes)
    s.occupancies.push_back(discretize_lane(count_of(counts_by_lane, lane), d1, d2));
  StateSpace space(static_cast<int>(j->incoming_lanes.size()),
                   static_cast<int>(j->phases.size()));
  space.index(s);  // range-check the phase against this junction
  return s;
}

CostSignal neighborhood_cost(const TrafficNetwork& net, const std::vector<int>& counts_by_lane,
                             int junction_id, double d1, double d2, long cycle) {
  auto it = net.neighborhoods.find(junction_id);
  if (it == net.neighborhoods.end() || it->second.empty())
    throw std::out_of_range("junction " + std::to_string(junction_id) + " has no neighborhood");

  double total = 0.0;
  for (int k : it->second) {
    const JunctionSpec* j = net.find_junction(k);
    if (!j) throw std::out_of_range("neighborhood references unknown junction " + std::to_string(k));
    for (int lane : j->incoming_lanes)
      total += static_cast<int>(discretize_lane(count_of(counts_by_lane, lane), d1, d2));
  }
  return {total / static_cast<double>(it->second.size()), junction_id, cycle};
}

double max_neighborhood_cost(const TrafficNetwork& net) {
  double worst = 0.0;
  for (const auto& [j, members] : net.neighborhoods) {
    if (members.empty()) continue;
    double total = 0.0;
    for (int k : members) {
      const JunctionSpec* junction = net.find_junction(k);
      if (junction) total += 2.0 * static_cast<double>(junction->incoming_lanes.size());
    }
    worst = std::max(worst, total / static_cast<double>(members.size()));
  }
  return worst;
}

}  // namespace tsc

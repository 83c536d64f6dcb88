#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace tsc {

enum class LaneKind { External, Internal };

/// One upstream connection of an internal lane: cars departing `lane`
/// enter this lane with probability `alpha`.
struct Feeder {
  int lane = -1;
  double alpha = 0.0;
};

/// An incoming lane at a junction.
///
/// External lanes are fed by a Poisson source with `arrival_rate` (cars per
/// second); internal lanes are fed by the departures of upstream lanes at
/// other junctions, as listed in `feeders`. `capacity` bounds the queue:
/// cars routed to a full lane are dropped and counted as blocked.
struct LaneSpec {
  int id = -1;
  int junction = -1;
  LaneKind kind = LaneKind::External;
  int capacity = 0;
  double arrival_rate = 0.0;  // external lanes only
  double service_rate = 0.0;  // cars per second while the lane has green
  std::vector<Feeder> feeders;  // internal lanes only
};

/// A signal phase; the lanes listed here have green while the phase runs.
struct PhaseSpec {
  int index = 0;  // 1-based position in the fixed round-robin order
  std::vector<int> lanes_served;
};

struct JunctionSpec {
  int id = 0;
  std::vector<int> incoming_lanes;
  std::vector<PhaseSpec> phases;
};

/// Static description of a signalised road network. Dynamics live in
/// Simulation; this type only carries topology and rates, so it can be
/// validated, serialized and diffed as plain data.
struct TrafficNetwork {
  std::vector<JunctionSpec> junctions;
  std::vector<LaneSpec> lanes;
  std::map<int, std::set<int>> neighborhoods;  // junction id -> cost neighborhood

  const LaneSpec* find_lane(int id) const;
  const JunctionSpec* find_junction(int id) const;
};

struct ValidationIssue {
  std::string code;  // stable category, e.g. "turning_probability"
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  int count(std::string_view code) const;
};

/// Checks every structural invariant of a network and reports all
/// violations. Never throws: an invalid network is data, not an error.
ValidationReport validate_network(const TrafficNetwork& net);

/// Three fully connected junctions, one external road each, three incoming
/// lanes and three single-lane phases per junction. External traffic splits
/// evenly between the two neighbouring junctions; internal traffic
/// continues to the opposite junction, so every turning row sums to one and
/// every internal lane has exactly two feeders.
TrafficNetwork build_three_junction_example();

/// One junction with `lanes` external lanes, one single-lane phase per
/// lane and all lanes sharing the same rates and capacity. Lane ids run
/// 0..lanes-1, phase p serves lane p-1. Handy for isolating one
/// controller; needs at least two lanes so every lane sees some red time.
TrafficNetwork build_single_junction(int lanes, double arrival_rate, double service_rate,
                                     int capacity);

/// Upstream connections of a lane: empty for external lanes, the feeder
/// list for internal ones. Throws std::out_of_range for an unknown id.
std::vector<Feeder> upstream_set(const TrafficNetwork& net, int lane_id);

/// Downstream connections derived from the feeder lists: all (lane, alpha)
/// a departing car may be routed to. Empty means departures leave the
/// network. Throws std::out_of_range for an unknown id.
std::vector<Feeder> downstream_links(const TrafficNetwork& net, int lane_id);

/// 1-based index of the phase serving the lane, or -1 if none does.
int phase_of_lane(const JunctionSpec& junction, int lane_id);

/// Canonical text form (sections: junctions, lanes, neighborhoods).
/// serialize(parse(serialize(net))) is byte-identical.
std::string serialize_network(const TrafficNetwork& net);
TrafficNetwork parse_network(const std::string& text);

void write_network_file(const std::string& path, const TrafficNetwork& net);
TrafficNetwork read_network_file(const std::string& path);

}  // namespace tsc

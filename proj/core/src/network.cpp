#include "tsc/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "tsc/textio.hpp"

namespace tsc {

using nlohmann::json;

const LaneSpec* TrafficNetwork::find_lane(int id) const {
  for (const auto& l : lanes)
    if (l.id == id) return &l;
  return nullptr;
}

const JunctionSpec* TrafficNetwork::find_junction(int id) const {
  for (const auto& j : junctions)
    if (j.id == id) return &j;
  return nullptr;
}

int ValidationReport::count(std::string_view code) const {
  int n = 0;
  for (const auto& issue : issues)
    if (issue.code == code) ++n;
  return n;
}

int phase_of_lane(const JunctionSpec& junction, int lane_id) {
  for (const auto& p : junction.phases)
    for (int l : p.lanes_served)
      if (l == lane_id) return p.index;
  return -1;
}

namespace {

constexpr double kAlphaTolerance = 1e-9;

void add(ValidationReport& report, std::string code, std::string message) {
  report.issues.push_back({std::move(code), std::move(message)});
}

}  // namespace

ValidationReport validate_network(const TrafficNetwork& net) {
  ValidationReport report;

  std::set<int> lane_ids, junction_ids;
  for (const auto& l : net.lanes) {
    if (!lane_ids.insert(l.id).second)
      add(report, "duplicate_id", "duplicate lane id " + std::to_string(l.id));
  }
  for (const auto& j : net.junctions) {
    if (!junction_ids.insert(j.id).second)
      add(report, "duplicate_id", "duplicate junction id " + std::to_string(j.id));
  }

  for (const auto& j : net.junctions) {
    const std::string jname = "junction " + std::to_string(j.id);
    if (j.incoming_lanes.empty()) add(report, "junction", jname + " has no incoming lanes");
    if (j.phases.empty()) add(report, "junction", jname + " has no phases");

    std::map<int, int> phase_assignments;  // lane -> number of phases serving it
    for (int l : j.incoming_lanes) phase_assignments[l] = 0;

    for (size_t k = 0; k < j.phases.size(); ++k) {
      const auto& p = j.phases[k];
      if (p.index != static_cast<int>(k) + 1)
        add(report, "phase", jname + " phase at position " + std::to_string(k + 1) +
                                 " has index " + std::to_string(p.index));
      if (p.lanes_served.empty())
        add(report, "phase", jname + " phase " + std::to_string(p.index) + " serves no lane");
      for (int l : p.lanes_served) {
        auto it = phase_assignments.find(l);
        if (it == phase_assignments.end())
          add(report, "phase", jname + " phase " + std::to_string(p.index) +
                                   " serves lane " + std::to_string(l) +
                                   " which is not an incoming lane");
        else
          it->second += 1;
      }
    }
    for (const auto& [lane, n] : phase_assignments) {
      if (n != 1)
        add(report, "phase", jname + " lane " + std::to_string(lane) + " is served by " +
                                 std::to_string(n) + " phases (expected exactly 1)");
    }

    for (int l : j.incoming_lanes) {
      const LaneSpec* lane = net.find_lane(l);
      if (!lane)
        add(report, "reference", jname + " lists unknown incoming lane " + std::to_string(l));
      else if (lane->junction != j.id)
        add(report, "reference", jname + " lists lane " + std::to_string(l) +
                                     " owned by junction " + std::to_string(lane->junction));
    }
  }

  for (const auto& l : net.lanes) {
    const std::string lname = "lane " + std::to_string(l.id);
    if (!net.find_junction(l.junction))
      add(report, "reference", lname + " references unknown junction " + std::to_string(l.junction));
    if (l.capacity <= 0) add(report, "lane", lname + " has non-positive capacity");
    if (!(l.service_rate > 0)) add(report, "lane", lname + " has non-positive service rate");
    if (l.kind == LaneKind::External) {
      if (l.arrival_rate < 0) add(report, "lane", lname + " has negative arrival rate");
      if (!l.feeders.empty())
        add(report, "lane", lname + " is external but lists feeders");
    } else {
      if (l.feeders.empty())
        add(report, "lane", lname + " is internal but has no feeders");
    }
    for (const auto& f : l.feeders) {
      const LaneSpec* up = net.find_lane(f.lane);
      if (!up) {
        add(report, "reference", lname + " feeder references unknown lane " + std::to_string(f.lane));
        continue;
      }
      if (up->junction == l.junction)
        add(report, "reference", lname + " feeder lane " + std::to_string(f.lane) +
                                     " belongs to the same junction");
      if (f.alpha < 0.0 || f.alpha > 1.0)
        add(report, "turning_probability",
            lname + " feeder from lane " + std::to_string(f.lane) + " has alpha " +
                format_double(f.alpha) + " outside [0,1]");
    }
  }

  // Turning rows must be full probability distributions wherever a lane has
  // at least one downstream connection.
  for (const auto& l : net.lanes) {
    double total = 0.0;
    int links = 0;
    for (const auto& down : net.lanes) {
      for (const auto& f : down.feeders) {
        if (f.lane == l.id) {
          total += f.alpha;
          ++links;
        }
      }
    }
    if (links > 0 && std::abs(total - 1.0) > kAlphaTolerance)
      add(report, "turning_probability",
          "turning probabilities out of lane " + std::to_string(l.id) + " sum to " +
              format_double(total));
  }

  // Neighborhoods: every junction covers itself, members exist, and the
  // relation is symmetric between physically connected junctions.
  std::set<std::pair<int, int>> adjacent;  // (a, b) with a feeder edge either way
  for (const auto& l : net.lanes)
    for (const auto& f : l.feeders) {
      const LaneSpec* up = net.find_lane(f.lane);
      if (up && up->junction != l.junction) {
        adjacent.insert({l.junction, up->junction});
        adjacent.insert({up->junction, l.junction});
      }
    }

  for (const auto& j : net.junctions) {
    auto it = net.neighborhoods.find(j.id);
    if (it == net.neighborhoods.end()) {
      add(report, "neighborhood", "junction " + std::to_string(j.id) + " has no neighborhood set");
      continue;
    }
    if (!it->second.count(j.id))
      add(report, "neighborhood",
          "junction " + std::to_string(j.id) + " is missing from its own neighborhood");
    for (int k : it->second)
      if (!net.find_junction(k))
        add(report, "neighborhood", "neighborhood of junction " + std::to_string(j.id) +
                                        " references unknown junction " + std::to_string(k));
  }
  for (const auto& [a, b] : adjacent) {
    auto na = net.neighborhoods.find(a);
    auto nb = net.neighborhoods.find(b);
    if (na != net.neighborhoods.end() && nb != net.neighborhoods.end()) {
      if (na->second.count(b) != nb->second.count(a))
        add(report, "neighborhood", "adjacent junctions " + std::to_string(a) + " and " +
                                        std::to_string(b) + " have asymmetric neighborhoods");
    }
  }

  for (const auto& [j, members] : net.neighborhoods)
    if (!net.find_junction(j))
      add(report, "neighborhood", "neighborhood entry for unknown junction " + std::to_string(j));

  return report;
}

TrafficNetwork build_three_junction_example() {
  constexpr double kArrivalRate = 0.2;
  constexpr double kServiceRate = 0.5;
  constexpr int kCapacity = 40;

  TrafficNetwork net;

  // Lane ids per junction j (1-based): 3(j-1) is the external entry, the
  // other two carry traffic arriving from the two neighbouring junctions.
  struct LaneRole {
    int junction;
    LaneKind kind;
    int from_junction;  // internal lanes: where the traffic comes from
  };
  const LaneRole roles[9] = {
      {1, LaneKind::External, 0}, {1, LaneKind::Internal, 2}, {1, LaneKind::Internal, 3},
      {2, LaneKind::External, 0}, {2, LaneKind::Internal, 3}, {2, LaneKind::Internal, 1},
      {3, LaneKind::External, 0}, {3, LaneKind::Internal, 1}, {3, LaneKind::Internal, 2},
  };

  auto external_of = [](int junction) { return 3 * (junction - 1); };
  auto internal_from = [&](int junction, int from) {
    for (int id = 0; id < 9; ++id)
      if (roles[id].junction == junction && roles[id].kind == LaneKind::Internal &&
          roles[id].from_junction == from)
        return id;
    return -1;
  };

  for (int id = 0; id < 9; ++id) {
    LaneSpec lane;
    lane.id = id;
    lane.junction = roles[id].junction;
    lane.kind = roles[id].kind;
    lane.capacity = kCapacity;
    lane.service_rate = kServiceRate;
    if (lane.kind == LaneKind::External) {
      lane.arrival_rate = kArrivalRate;
    } else {
      // A car leaving junction u heads here either from u's external entry
      // (half of that traffic, the other half goes to the third junction)
      // or from u's lane that came from the third junction (all of it: no
      // U-turns, so the opposite junction is its only continuation).
      const int u = roles[id].from_junction;
      const int j = lane.junction;
      const int third = 6 - u - j;  // junction ids sum to 6
      lane.feeders.push_back({external_of(u), 0.5});
      lane.feeders.push_back({internal_from(u, third), 1.0});
    }
    net.lanes.push_back(lane);
  }

  for (int j = 1; j <= 3; ++j) {
    JunctionSpec junction;
    junction.id = j;
    for (int k = 0; k < 3; ++k) junction.incoming_lanes.push_back(3 * (j - 1) + k);
    for (int p = 1; p <= 3; ++p)
      junction.phases.push_back({p, {3 * (j - 1) + p - 1}});
    net.junctions.push_back(junction);
    net.neighborhoods[j] = {1, 2, 3};
  }

  return net;
}

TrafficNetwork build_single_junction(int lanes, double arrival_rate, double service_rate,
                                     int capacity) {
  if (lanes < 2)
    throw std::invalid_argument("a single-phase lane is never red; use at least two lanes");

  TrafficNetwork net;
  JunctionSpec junction;
  junction.id = 1;
  for (int id = 0; id < lanes; ++id) {
    LaneSpec lane;
    lane.id = id;
    lane.junction = 1;
    lane.kind = LaneKind::External;
    lane.capacity = capacity;
    lane.arrival_rate = arrival_rate;
    lane.service_rate = service_rate;
    net.lanes.push_back(lane);
    junction.incoming_lanes.push_back(id);
    junction.phases.push_back({id + 1, {id}});
  }
  net.junctions.push_back(junction);
  net.neighborhoods[1] = {1};
  return net;
}

std::vector<Feeder> upstream_set(const TrafficNetwork& net, int lane_id) {
  const LaneSpec* lane = net.find_lane(lane_id);
  if (!lane) throw std::out_of_range("unknown lane id " + std::to_string(lane_id));
  return lane->feeders;
}

std::vector<Feeder> downstream_links(const TrafficNetwork& net, int lane_id) {
  if (!net.find_lane(lane_id))
    throw std::out_of_range("unknown lane id " + std::to_string(lane_id));
  std::vector<Feeder> links;
  for (const auto& down : net.lanes)
    for (const auto& f : down.feeders)
      if (f.lane == lane_id) links.push_back({down.id, f.alpha});
  return links;
}

std::string serialize_network(const TrafficNetwork& net) {
  json root;

  json junctions = json::array();
  for (const auto& j : net.junctions) {
    json phases = json::array();
    for (const auto& p : j.phases)
      phases.push_back({{"index", p.index}, {"lanes_served", p.lanes_served}});
    junctions.push_back(
        {{"id", j.id}, {"incoming_lanes", j.incoming_lanes}, {"phases", phases}});
  }
  root["junctions"] = junctions;

  json lanes = json::array();
  for (const auto& l : net.lanes) {
    json lane{{"id", l.id},
              {"junction", l.junction},
              {"kind", l.kind == LaneKind::External ? "External" : "Internal"},
              {"capacity", l.capacity},
              {"service_rate", l.service_rate}};
    if (l.kind == LaneKind::External) {
      lane["arrival_rate"] = l.arrival_rate;
    } else {
      json feeders = json::array();
      for (const auto& f : l.feeders) feeders.push_back({{"lane", f.lane}, {"alpha", f.alpha}});
      lane["feeders"] = feeders;
    }
    lanes.push_back(lane);
  }
  root["lanes"] = lanes;

  json neighborhoods = json::object();
  for (const auto& [j, members] : net.neighborhoods)
    neighborhoods[std::to_string(j)] = members;
  root["neighborhoods"] = neighborhoods;

  return root.dump(2) + "\n";
}

namespace {

void require_keys(const json& obj, std::initializer_list<const char*> allowed,
                  const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known)
      throw std::invalid_argument("unknown key '" + it.key() + "' in " + context);
  }
}

TrafficNetwork parse_network_json(const json& root) {
  require_keys(root, {"junctions", "lanes", "neighborhoods"}, "network");

  TrafficNetwork net;
  for (const auto& j : root.at("junctions")) {
    require_keys(j, {"id", "incoming_lanes", "phases"}, "junction");
    JunctionSpec junction;
    junction.id = j.at("id").get<int>();
    junction.incoming_lanes = j.at("incoming_lanes").get<std::vector<int>>();
    for (const auto& p : j.at("phases")) {
      require_keys(p, {"index", "lanes_served"}, "phase");
      junction.phases.push_back(
          {p.at("index").get<int>(), p.at("lanes_served").get<std::vector<int>>()});
    }
    net.junctions.push_back(junction);
  }
  for (const auto& l : root.at("lanes")) {
    require_keys(l, {"id", "junction", "kind", "capacity", "arrival_rate", "service_rate", "feeders"},
                 "lane");
    LaneSpec lane;
    lane.id = l.at("id").get<int>();
    lane.junction = l.at("junction").get<int>();
    const std::string kind = l.at("kind").get<std::string>();
    if (kind == "External")
      lane.kind = LaneKind::External;
    else if (kind == "Internal")
      lane.kind = LaneKind::Internal;
    else
      throw std::invalid_argument("lane " + std::to_string(lane.id) + ": unknown kind '" + kind + "'");
    lane.capacity = l.at("capacity").get<int>();
    lane.service_rate = l.at("service_rate").get<double>();
    if (l.contains("arrival_rate")) lane.arrival_rate = l.at("arrival_rate").get<double>();
    if (l.contains("feeders"))
      for (const auto& f : l.at("feeders")) {
        require_keys(f, {"lane", "alpha"}, "feeder");
        lane.feeders.push_back({f.at("lane").get<int>(), f.at("alpha").get<double>()});
      }
    net.lanes.push_back(lane);
  }
  for (auto it = root.at("neighborhoods").begin(); it != root.at("neighborhoods").end(); ++it) {
    int j = 0;
    try {
      j = static_cast<int>(parse_long(it.key()));
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("neighborhood key '" + it.key() + "' is not a junction id");
    }
    std::set<int> members;
    for (const auto& m : it.value()) members.insert(m.get<int>());
    net.neighborhoods[j] = members;
  }
  return net;
}

}  // namespace

TrafficNetwork parse_network(const std::string& text) {
  try {
    return parse_network_json(json::parse(text));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("network parse error: ") + e.what());
  }
}

void write_network_file(const std::string& path, const TrafficNetwork& net) {
  write_text_file(path, serialize_network(net));
}

TrafficNetwork read_network_file(const std::string& path) {
  return parse_network(read_text_file(path));
}

}  // namespace tsc

#include "tsc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "tsc/textio.hpp"

namespace tsc {

GreenSchedule GreenSchedule::uniform(const TrafficNetwork& net, double duration) {
  GreenSchedule s;
  for (const auto& j : net.junctions)
    for (const auto& p : j.phases) s.set(j.id, p.index, duration);
  return s;
}

void GreenSchedule::set(int junction, int phase, double duration) {
  if (phase < 1) throw std::out_of_range("phase indices are 1-based");
  if (!(duration > 0)) throw std::invalid_argument("green duration must be positive");
  auto& v = durations_[junction];
  if (static_cast<int>(v.size()) < phase) v.resize(phase, 0.0);
  v[phase - 1] = duration;
}

double GreenSchedule::duration(int junction, int phase) const {
  auto it = durations_.find(junction);
  if (it == durations_.end() || phase < 1 || phase > static_cast<int>(it->second.size()) ||
      it->second[phase - 1] <= 0)
    throw std::out_of_range("no duration for junction " + std::to_string(junction) + " phase " +
                            std::to_string(phase));
  return it->second[phase - 1];
}

double GreenSchedule::cycle_time(int junction) const {
  auto it = durations_.find(junction);
  if (it == durations_.end())
    throw std::out_of_range("no durations for junction " + std::to_string(junction));
  double total = 0.0;
  for (double d : it->second) total += d;
  return total;
}

std::string cycle_csv_header() {
  return "cycle,junction,lane,before,arrivals,departures,blocked,after";
}

void append_cycle_csv(std::ostream& out, const CycleReport& report) {
  for (const auto& r : report.lanes)
    out << r.cycle << ',' << r.junction << ',' << r.lane << ',' << r.before << ',' << r.arrivals
        << ',' << r.departures << ',' << r.blocked << ',' << r.after << '\n';
}

int sample_poisson_arrivals(double rate, double dt, RngStream& rng) {
  if (rate < 0 || dt < 0) throw std::invalid_argument("arrival rate and duration must be >= 0");
  const double mean = rate * dt;
  if (mean == 0.0) return 0;
  return std::poisson_distribution<int>(mean)(rng.engine());
}

Simulation::Simulation(const TrafficNetwork& net, RngStream rng) : net_(&net), rng_(rng) {
  ValidationReport report = validate_network(net);
  if (!report.ok())
    throw std::invalid_argument("network failed validation: " + report.issues.front().message +
                                (report.issues.size() > 1
                                     ? " (+" + std::to_string(report.issues.size() - 1) + " more)"
                                     : ""));

  for (const auto& j : net.junctions) {
    junctions_[j.id] = &j;
    clock_.cycle_index[j.id] = 0;
  }
  for (const auto& l : net.lanes) {
    LaneRuntime rt;
    rt.capacity = l.capacity;
    rt.arrival_rate = l.arrival_rate;
    rt.service_rate = l.service_rate;
    rt.junction = l.junction;
    rt.external = (l.kind == LaneKind::External);
    double cumulative = 0.0;
    for (const auto& link : downstream_links(net, l.id)) {
      cumulative += link.alpha;
      rt.route_lane.push_back(link.lane);
      rt.route_cumulative.push_back(cumulative);
    }
    if (!rt.route_cumulative.empty()) rt.route_cumulative.back() = 1.0;  // guard fp dust
    lanes_.emplace(l.id, std::move(rt));
  }
}

Simulation::LaneRuntime& Simulation::lane_at(int lane_id) {
  auto it = lanes_.find(lane_id);
  if (it == lanes_.end()) throw std::out_of_range("unknown lane id " + std::to_string(lane_id));
  return it->second;
}

const Simulation::LaneRuntime& Simulation::lane_at(int lane_id) const {
  auto it = lanes_.find(lane_id);
  if (it == lanes_.end()) throw std::out_of_range("unknown lane id " + std::to_string(lane_id));
  return it->second;
}

int Simulation::count(int lane_id) const { return lane_at(lane_id).state.count; }

void Simulation::set_count(int lane_id, int count) {
  LaneRuntime& rt = lane_at(lane_id);
  if (count < 0 || count > rt.capacity)
    throw std::invalid_argument("count " + std::to_string(count) + " outside [0, " +
                                std::to_string(rt.capacity) + "] for lane " +
                                std::to_string(lane_id));
  rt.state.count = count;
}

std::vector<int> Simulation::counts_by_lane() const {
  int max_id = -1;
  for (const auto& [id, rt] : lanes_) max_id = std::max(max_id, id);
  std::vector<int> counts(max_id + 1, 0);
  for (const auto& [id, rt] : lanes_) counts[id] = rt.state.count;
  return counts;
}

void Simulation::route_departure(LaneRuntime& from) {
  if (from.route_lane.empty()) return;  // discharges out of the network
  const double u = rng_.uniform01();
  size_t k = 0;
  while (k + 1 < from.route_cumulative.size() && u >= from.route_cumulative[k]) ++k;
  LaneRuntime& to = lane_at(from.route_lane[k]);
  if (to.state.count < to.capacity) {
    to.state.count += 1;
    to.state.arrivals += 1;
  } else {
    to.state.blocked += 1;
  }
}

void Simulation::step_phase(int junction_id, int phase, double duration) {
  auto jit = junctions_.find(junction_id);
  if (jit == junctions_.end())
    throw std::out_of_range("unknown junction id " + std::to_string(junction_id));
  const JunctionSpec& junction = *jit->second;
  if (phase < 1 || phase > static_cast<int>(junction.phases.size()))
    throw std::out_of_range("junction " + std::to_string(junction_id) + " has no phase " +
                            std::to_string(phase));
  if (!(duration > 0)) throw std::invalid_argument("phase duration must be positive");

  const PhaseSpec& spec = junction.phases[phase - 1];

  // Serve the green lanes first, in ascending lane order.
  std::vector<int> served = spec.lanes_served;
  std::sort(served.begin(), served.end());
  for (int lane_id : served) {
    LaneRuntime& lane = lane_at(lane_id);
    const long offered = std::lround(lane.service_rate * duration);
    const long departures = std::min<long>(lane.state.count, offered);
    lane.state.count -= static_cast<int>(departures);
    lane.state.departures += departures;
    lane.green_offered += offered;
    lane.green_served += departures;
    for (long c = 0; c < departures; ++c) route_departure(lane);
  }

  // External sources feed this junction's red lanes for the whole phase.
  // Arrivals at a lane that currently has green pass through the junction
  // without queueing, so its source is skipped.
  for (int lane_id : junction.incoming_lanes) {
    LaneRuntime& lane = lane_at(lane_id);
    if (!lane.external || lane.arrival_rate == 0.0) continue;
    if (std::find(served.begin(), served.end(), lane_id) != served.end()) continue;
    const int offered = sample_poisson_arrivals(lane.arrival_rate, duration, rng_);
    const int accepted = std::min(offered, lane.capacity - lane.state.count);
    lane.state.count += accepted;
    lane.state.arrivals += accepted;
    lane.state.blocked += offered - accepted;
  }

  clock_.t += duration;
}

CycleReport Simulation::advance_cycle(const GreenSchedule& schedule) {
  CycleReport report;
  report.cycle = clock_.cycle_index.empty() ? 0 : clock_.cycle_index.begin()->second;

  std::map<int, int> before;
  for (auto& [id, rt] : lanes_) {
    before[id] = rt.state.count;
    rt.state.arrivals = 0;
    rt.state.departures = 0;
    rt.state.blocked = 0;
  }

  // Junction cycles run concurrently in the modelled world; stepping them
  // in id order only fixes the interleaving of routed hand-offs. Wall time
  // advances by the longest cycle, not by the sum.
  const double start_t = clock_.t;
  double longest = 0.0;
  for (const auto& j : net_->junctions) {
    for (const auto& p : j.phases) step_phase(j.id, p.index, schedule.duration(j.id, p.index));
    clock_.cycle_index[j.id] += 1;
    longest = std::max(longest, schedule.cycle_time(j.id));
  }
  clock_.t = start_t + longest;

  for (const auto& l : net_->lanes) {
    const LaneRuntime& rt = lane_at(l.id);
    report.lanes.push_back({report.cycle, l.junction, l.id, before[l.id], rt.state.arrivals,
                            rt.state.departures, rt.state.blocked, rt.state.count});
  }
  return report;
}

double Simulation::occupancy_probability(int lane_id) const {
  const LaneRuntime& rt = lane_at(lane_id);
  if (rt.green_offered == 0) return 0.0;
  return static_cast<double>(rt.green_served) / static_cast<double>(rt.green_offered);
}

long Simulation::total_blocked() const {
  long total = 0;
  for (const auto& [id, rt] : lanes_) total += rt.state.blocked;
  return total;
}

namespace {

double prob_for(const std::map<int, double>& occupancy_probs, int lane_id) {
  auto it = occupancy_probs.find(lane_id);
  if (it == occupancy_probs.end())
    throw std::invalid_argument("no occupancy probability for lane " + std::to_string(lane_id));
  if (it->second < 0.0 || it->second > 1.0)
    throw std::invalid_argument("occupancy probability for lane " + std::to_string(lane_id) +
                                " outside [0,1]: " + format_double(it->second));
  return it->second;
}

}  // namespace

double expected_queue_drift(const TrafficNetwork& net, int lane_id, const GreenSchedule& schedule,
                            const std::map<int, double>& occupancy_probs) {
  const LaneSpec* lane = net.find_lane(lane_id);
  if (!lane) throw std::out_of_range("unknown lane id " + std::to_string(lane_id));
  const JunctionSpec* junction = net.find_junction(lane->junction);
  if (!junction) throw std::out_of_range("lane " + std::to_string(lane_id) + " has no junction");
  const int phase = phase_of_lane(*junction, lane_id);
  if (phase < 1)
    throw std::invalid_argument("lane " + std::to_string(lane_id) + " is not served by any phase");

  const double green = schedule.duration(junction->id, phase);
  const double service = lane->service_rate * prob_for(occupancy_probs, lane_id) * green;

  if (lane->kind == LaneKind::External) {
    const double cycle = schedule.cycle_time(junction->id);
    return lane->arrival_rate * (cycle - green) - service;
  }

  double inflow = 0.0;
  for (const auto& f : lane->feeders) {
    const LaneSpec* up = net.find_lane(f.lane);
    if (!up) throw std::out_of_range("feeder references unknown lane " + std::to_string(f.lane));
    const JunctionSpec* upj = net.find_junction(up->junction);
    if (!upj) throw std::out_of_range("feeder lane " + std::to_string(f.lane) + " has no junction");
    const int up_phase = phase_of_lane(*upj, f.lane);
    if (up_phase < 1)
      throw std::invalid_argument("feeder lane " + std::to_string(f.lane) +
                                  " is not served by any phase");
    inflow += f.alpha * up->service_rate * prob_for(occupancy_probs, f.lane) *
              schedule.duration(upj->id, up_phase);
  }
  return inflow - service;
}

double drift_sign_condition(const TrafficNetwork& net, int lane_id,
                            const std::map<int, double>& occupancy_probs,
                            DriftConditionForm form) {
  const LaneSpec* lane = net.find_lane(lane_id);
  if (!lane) throw std::out_of_range("unknown lane id " + std::to_string(lane_id));
  if (lane->kind != LaneKind::External)
    throw std::invalid_argument("drift sign condition applies to external lanes only; lane " +
                                std::to_string(lane_id) + " is internal");

  const double p = prob_for(occupancy_probs, lane_id);
  double weight = 1.0;
  if (form == DriftConditionForm::AlphaWeighted) {
    const auto links = downstream_links(net, lane_id);
    weight = links.empty() ? 1.0 : links.front().alpha;
  }
  return lane->arrival_rate - lane->service_rate + weight * p * lane->service_rate;
}

}  // namespace tsc

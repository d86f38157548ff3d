#include "cross/sim/simulator.h"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace cross::sim {

Simulator::Simulator(std::shared_ptr<const Network> net, std::vector<VehicleSpec> vehicles, int episode_s)
    : net_(std::move(net)), episode_s_(episode_s) {
  if (!net_) throw std::invalid_argument("Simulator: null network");
  std::stable_sort(vehicles.begin(), vehicles.end(),
                   [](const VehicleSpec& a, const VehicleSpec& b) { return a.depart < b.depart; });
  vehicles_.reserve(vehicles.size());
  for (auto& spec : vehicles) {
    if (spec.route.empty()) throw std::invalid_argument("Simulator: vehicle " + std::to_string(spec.id) + " has no route");
    Vehicle v;
    for (int l : spec.route) v.free_flow += net_->links[static_cast<std::size_t>(l)].free_flow_ticks();
    v.spec = std::move(spec);
    vehicles_.push_back(std::move(v));
  }
  on_link_.assign(net_->links.size(), {});
  const std::size_t n_ix = net_->intersections.size();
  queues_.resize(n_ix);
  next_discharge_.resize(n_ix);
  discharge_log_.resize(n_ix);
  for (std::size_t i = 0; i < n_ix; ++i) {
    const std::size_t m = net_->intersections[i].movements.size();
    queues_[i].assign(m, {});
    next_discharge_[i].assign(m, 0);
    discharge_log_[i].assign(m, {});
  }
  signals_.assign(n_ix, {});
  lane_queued_.assign(net_->lane_count(), 0);
  lane_order_.assign(net_->lane_count(), {});
  lane_assigned_.assign(net_->lane_count(), 0);
}

int Simulator::choose_movement(int link, int next_link) const {
  const int ix = net_->intersection_of_node(net_->links[static_cast<std::size_t>(link)].to);
  if (ix < 0) throw std::logic_error("Simulator: route continues past a boundary node at link " + std::to_string(link));
  const auto candidates = net_->movements_between(ix, link, next_link);
  if (candidates.empty()) throw std::logic_error("Simulator: route uses a turn that is not a movement");
  // Least-loaded incoming lane; ties go to the leftmost lane.
  const auto& movements = net_->intersections[static_cast<std::size_t>(ix)].movements;
  int best = candidates.front();
  for (int m : candidates) {
    const auto& a = movements[static_cast<std::size_t>(m)].in;
    const auto& b = movements[static_cast<std::size_t>(best)].in;
    const int la = lane_assigned_[net_->lane_id(a)], lb = lane_assigned_[net_->lane_id(b)];
    if (la < lb || (la == lb && a.lane < b.lane)) best = m;
  }
  return best;
}

void Simulator::enter_link(int vid, int leg, int lane_hint) {
  Vehicle& v = vehicles_[static_cast<std::size_t>(vid)];
  const int link = v.spec.route[static_cast<std::size_t>(leg)];
  v.leg = leg;
  v.dist = 0.0;
  v.status = Status::Traversing;
  if (static_cast<std::size_t>(leg) + 1 < v.spec.route.size()) {
    v.movement = choose_movement(link, v.spec.route[static_cast<std::size_t>(leg) + 1]);
    const int ix = net_->intersection_of_node(net_->links[static_cast<std::size_t>(link)].to);
    v.lane = net_->intersections[static_cast<std::size_t>(ix)].movements[static_cast<std::size_t>(v.movement)].in.lane;
  } else {
    v.movement = -1;
    v.lane = std::min(lane_hint, net_->links[static_cast<std::size_t>(link)].lanes - 1);
  }
  ++lane_assigned_[net_->lane_id({link, v.lane})];
  on_link_[static_cast<std::size_t>(link)].push_back(vid);
}

void Simulator::step() {
  // Departures.
  while (next_departure_ < vehicles_.size() && vehicles_[next_departure_].spec.depart <= clock_) {
    ++departed_;
    ++in_network_;
    enter_link(static_cast<int>(next_departure_), 0, 0);
    ++next_departure_;
  }

  // Travel at free-flow speed; vehicles reaching the stop line queue or leave.
  for (std::size_t l = 0; l < on_link_.size(); ++l) {
    auto& dq = on_link_[l];
    if (dq.empty()) continue;
    const Link& link = net_->links[l];
    for (int vid : dq) vehicles_[static_cast<std::size_t>(vid)].dist += link.speed_mps;
    while (!dq.empty() && vehicles_[static_cast<std::size_t>(dq.front())].dist >= link.length_m - 1e-9) {
      const int vid = dq.front();
      dq.pop_front();
      Vehicle& v = vehicles_[static_cast<std::size_t>(vid)];
      const std::size_t lane = net_->lane_id({static_cast<int>(l), v.lane});
      if (v.movement >= 0) {
        const int ix = net_->intersection_of_node(link.to);
        v.status = Status::Queued;
        queues_[static_cast<std::size_t>(ix)][static_cast<std::size_t>(v.movement)].push_back(vid);
        ++lane_queued_[lane];
        lane_order_[lane].push_back(vid);
      } else {
        v.status = Status::Arrived;
        v.arrive_time = clock_ + 1;
        --lane_assigned_[lane];
        ++arrived_;
        --in_network_;
      }
    }
  }

  // Discharge: every movement of the active phase releases at most one
  // vehicle per saturation headway. Nothing moves during yellow.
  for (std::size_t ix = 0; ix < net_->intersections.size(); ++ix) {
    const SignalState& sig = signals_[ix];
    if (sig.yellow_left > 0) continue;
    const Intersection& inter = net_->intersections[ix];
    if (inter.phases.empty()) continue;
    for (int m : inter.phases[static_cast<std::size_t>(sig.phase)]) {
      auto& q = queues_[ix][static_cast<std::size_t>(m)];
      auto& next = next_discharge_[ix][static_cast<std::size_t>(m)];
      if (q.empty() || clock_ < next) continue;
      const int vid = q.front();
      q.pop_front();
      next = clock_ + kHeadwayTicks;
      const Movement& mv = inter.movements[static_cast<std::size_t>(m)];
      const std::size_t lane = net_->lane_id(mv.in);
      --lane_queued_[lane];
      --lane_assigned_[lane];
      auto& order = lane_order_[lane];
      order.erase(std::find(order.begin(), order.end(), vid));
      if (log_discharges_) discharge_log_[ix][static_cast<std::size_t>(m)].push_back(vid);
      enter_link(vid, vehicles_[static_cast<std::size_t>(vid)].leg + 1, mv.out.lane);
    }
  }

  for (auto& sig : signals_) {
    if (sig.yellow_left > 0) {
      if (--sig.yellow_left == 0) sig.phase = sig.pending;
    } else if (sig.green_left > 0) {
      --sig.green_left;
    }
  }

  if (!net_->intersections.empty()) {
    double total = 0.0;
    for (const auto& per_ix : queues_)
      for (const auto& q : per_ix) total += static_cast<double>(q.size());
    queue_accum_ += total / static_cast<double>(net_->intersections.size());
  }
  for (std::size_t l = 0; l < on_link_.size(); ++l) {
    speed_accum_ += static_cast<double>(on_link_[l].size()) * net_->links[l].speed_mps;
  }
  speed_samples_ += static_cast<double>(in_network_);
  ++clock_;
}

bool Simulator::needs_decision(int ix) const {
  const auto& s = signals_.at(static_cast<std::size_t>(ix));
  return s.yellow_left == 0 && s.green_left == 0;
}

void Simulator::apply_action(int ix, int phase) {
  if (ix < 0 || ix >= static_cast<int>(signals_.size())) throw std::out_of_range("apply_action: no intersection " + std::to_string(ix));
  const auto& inter = net_->intersections[static_cast<std::size_t>(ix)];
  if (phase < 0 || phase >= static_cast<int>(inter.phases.size())) {
    throw std::out_of_range("apply_action: phase " + std::to_string(phase) + " out of range at '" + inter.id + "'");
  }
  SignalState& s = signals_[static_cast<std::size_t>(ix)];
  if (!needs_decision(ix)) throw std::logic_error("apply_action: '" + inter.id + "' is mid-interval");
  if (phase != s.phase) {
    s.yellow_left = kYellowTicks;
    s.pending = phase;
  }
  s.green_left = kGreenTicks;
}

LaneReading Simulator::lane_reading(LaneRef lane) const {
  LaneReading r;
  r.queued = std::min(lane_queued_[net_->lane_id(lane)], kDetectorCap);
  const Link& link = net_->links[static_cast<std::size_t>(lane.link)];
  int moving = 0;
  for (int vid : on_link_[static_cast<std::size_t>(lane.link)]) {
    const Vehicle& v = vehicles_[static_cast<std::size_t>(vid)];
    if (v.lane == lane.lane && link.length_m - v.dist <= kDetectorRange) ++moving;
  }
  r.moving = std::min(moving, kDetectorCap);
  return r;
}

std::vector<MovementReading> Simulator::read_detectors(int ix) const {
  const auto& inter = net_->intersections.at(static_cast<std::size_t>(ix));
  std::vector<MovementReading> out;
  out.reserve(inter.movements.size());
  for (std::size_t m = 0; m < inter.movements.size(); ++m) {
    const auto& mv = inter.movements[m];
    const auto o = lane_reading(mv.out);
    MovementReading r{0, o.queued, 0, o.moving};
    // a shared lane's window is split by the movement each vehicle takes
    const auto& order = lane_order_[net_->lane_id(mv.in)];
    const std::size_t window = std::min<std::size_t>(order.size(), kDetectorCap);
    for (std::size_t k = 0; k < window; ++k)
      if (vehicles_[static_cast<std::size_t>(order[k])].movement == static_cast<int>(m)) ++r.q_in;
    const Link& link = net_->links[static_cast<std::size_t>(mv.in.link)];
    for (int vid : on_link_[static_cast<std::size_t>(mv.in.link)]) {
      const Vehicle& v = vehicles_[static_cast<std::size_t>(vid)];
      if (v.lane == mv.in.lane && v.movement == static_cast<int>(m) && link.length_m - v.dist <= kDetectorRange) ++r.n_in;
    }
    r.n_in = std::min(r.n_in, kDetectorCap);
    out.push_back(r);
  }
  return out;
}

double Simulator::reward(int ix) const {
  const auto& inter = net_->intersections.at(static_cast<std::size_t>(ix));
  int total = 0;
  for (const auto& lane : inter.in_lanes) total += std::min(lane_queued_[net_->lane_id(lane)], kDetectorCap);
  return -static_cast<double>(total);
}

MetricReport Simulator::metrics() const {
  MetricReport r;
  r.departed = departed_;
  r.arrived = arrived_;
  if (clock_ == 0) return r;
  const double t = static_cast<double>(clock_);
  r.queue_veh = queue_accum_ / t;
  r.speed_mps = speed_samples_ > 0.0 ? speed_accum_ / speed_samples_ : 0.0;
  r.completion_vps = static_cast<double>(arrived_) / t;
  double trip = 0.0, delay = 0.0, duration = 0.0;
  for (const auto& v : vehicles_) {
    if (v.status == Status::Pending) continue;
    if (v.status == Status::Arrived) {
      const double tt = v.arrive_time - v.spec.depart;
      trip += tt;
      delay += tt - v.free_flow;
      duration += tt;
    } else {
      duration += clock_ - v.spec.depart;
    }
  }
  if (arrived_ > 0) {
    r.trip_time_s = trip / static_cast<double>(arrived_);
    r.trip_delay_s = delay / static_cast<double>(arrived_);
  }
  if (departed_ > 0) r.trip_duration_s = duration / static_cast<double>(departed_);
  return r;
}

}  // namespace cross::sim

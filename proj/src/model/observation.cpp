#include "cross/model/observation.h"

#include <algorithm>
#include <set>

namespace cross::model {

JunctionClass junction_class(const sim::Network& net, int ix) {
  const auto& inter = net.intersections[static_cast<std::size_t>(ix)];
  const auto type = net.nodes[static_cast<std::size_t>(inter.node)].type;
  if (type == sim::NodeType::FourWay && inter.phases.size() == 4) return JunctionClass::FourWay4;
  if (type == sim::NodeType::FourWay && inter.phases.size() == 8) return JunctionClass::FourWay8;
  if (type == sim::NodeType::TJunction && inter.phases.size() == 3) return JunctionClass::T3;
  return JunctionClass::Other;
}

std::array<double, kTopologySize> topology_vector(const sim::Network& net, int ix) {
  std::array<double, kTopologySize> v{};
  const auto& inter = net.intersections[static_cast<std::size_t>(ix)];
  v[static_cast<std::size_t>(junction_class(net, ix))] = 1.0;
  auto summarize = [&](const std::vector<int>& links, double& len, double& speed, double& lanes) {
    len = speed = lanes = 0.0;
    if (links.empty()) return;
    for (int l : links) {
      const auto& link = net.links[static_cast<std::size_t>(l)];
      len += link.length_m;
      speed = std::max(speed, link.speed_mps);
      lanes += link.lanes;
    }
    len /= static_cast<double>(links.size());
  };
  double len = 0, speed = 0, lanes = 0;
  summarize(inter.in_links, len, speed, lanes);
  v[kTypeClasses + 0] = len / 100.0;
  v[kTypeClasses + 1] = speed / 10.0;
  v[kTypeClasses + 2] = lanes / 10.0;
  v[kTypeClasses + 3] = static_cast<double>(inter.movements.size()) / static_cast<double>(kMovements);
  summarize(inter.out_links, len, speed, lanes);
  v[kTypeClasses + 4] = len / 100.0;
  v[kTypeClasses + 5] = speed / 10.0;
  v[kTypeClasses + 6] = lanes / 10.0;
  return v;
}

Observation build_observation(const sim::Simulator& sim, int ix) {
  const auto& net = sim.network();
  const auto& inter = net.intersections.at(static_cast<std::size_t>(ix));
  Observation o;
  o.active_phase = sim.signal(ix).phase;
  o.num_phases = static_cast<int>(inter.phases.size());
  const auto readings = sim.read_detectors(ix);
  std::vector<bool> active(inter.movements.size(), false);
  if (!inter.phases.empty()) {
    for (int m : inter.phases[static_cast<std::size_t>(o.active_phase)]) active[static_cast<std::size_t>(m)] = true;
  }
  for (std::size_t m = 0; m < inter.movements.size(); ++m) {
    double* row = &o.state[m * kFeatures];
    row[0] = active[m] ? 1.0 : 0.0;
    row[1] = readings[m].q_in;
    row[2] = readings[m].q_out;
    row[3] = readings[m].n_in;
    row[4] = readings[m].n_out;
    o.movement_mask[m] = 1;
  }
  for (std::size_t p = 0; p < inter.phases.size(); ++p) {
    o.phase_mask[p] = 1;
    for (int m : inter.phases[p]) o.phases[p * kMovements + static_cast<std::size_t>(m)] = 1.0;
  }
  o.topology = topology_vector(net, ix);
  return o;
}

}  // namespace cross::model

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "cross/sim/network.h"

namespace cross::sim {

// Poisson arrivals from `origin` at `rate_vpm` during [t0, t1). A destination
// of "*" draws uniformly among boundary nodes reachable from the origin.
struct DemandEntry {
  std::string origin;
  std::string destination = "*";
  double rate_vpm = 0.0;
  double t0 = 0.0;
  double t1 = 3600.0;
};

struct DemandSchedule {
  std::vector<DemandEntry> entries;
  std::uint64_t seed = 0;
};

struct Scenario {
  std::string name;
  Network network;
  DemandSchedule demand;
  int episode_s = 3600;
};

struct VehicleSpec {
  int id = 0;
  int depart = 0;          // whole seconds
  std::vector<int> route;  // link indices, origin boundary to destination boundary
};

// Parses and validates a scenario document. Errors name the bad element.
Scenario parse_scenario(const nlohmann::json& doc, const std::string& name = "scenario");
Scenario load_scenario(const std::filesystem::path& file);
nlohmann::json scenario_to_json(const Scenario& s);
void save_scenario(const Scenario& s, const std::filesystem::path& file);

// Fastest route by free-flow time that only uses turns the intersections
// permit. Ties go to the lower link index. Empty when unreachable.
std::vector<int> shortest_route(const Network& net, int origin, int destination);

// Samples the vehicle list. Deterministic in (network, schedule); sorted by
// departure time, ids in that order.
std::vector<VehicleSpec> generate_vehicles(const Network& net, const DemandSchedule& demand, int episode_s);

}  // namespace cross::sim

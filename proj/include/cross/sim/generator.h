#pragma once

#include <cstdint>
#include <vector>

#include "cross/sim/scenario.h"

namespace cross::sim {

struct GridSpec {
  int rows = 2;
  int cols = 2;
  double spacing_m = 300.0;
  double speed_mps = 15.0;
  int lanes = 2;
  bool eight_phase = false;
  // Network-wide mean arrival rate, split evenly over boundary origins and
  // shaped over time by `profile` (equal-length segments, mean multiplier 1).
  double total_rate_vpm = 0.0;
  std::vector<double> profile{0.6, 1.2, 1.4, 0.8};
  std::uint64_t seed = 0;
  int episode_s = 3600;
};

// rows x cols grid of 4-way intersections, one boundary node per edge road.
Scenario generate_grid(const GridSpec& spec);
// Grid whose middle row is an arterial: its two end origins carry
// `main_weight` times the rate of a side-street origin. Total rate preserved.
Scenario generate_arterial(const GridSpec& spec, double main_weight = 3.0);
// Heterogeneous grid: the top row loses its north arm (T-junctions) and every
// other remaining intersection runs the 8-phase plan.
Scenario generate_mixed(const GridSpec& spec);

// Signal plans for the two junction archetypes. `node` must already have its
// links in `net.links`. Movement order is fixed: approaches clockwise from
// north, lanes left to right.
Intersection make_four_way(const Network& net, int node, bool eight_phase);
Intersection make_t_junction(const Network& net, int node);

}  // namespace cross::sim

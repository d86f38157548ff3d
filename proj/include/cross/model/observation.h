#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "cross/sim/simulator.h"

namespace cross::model {

inline constexpr std::size_t kMovements = sim::kMaxMovements;  // 36
inline constexpr std::size_t kPhases = sim::kMaxPhases;         // 8
inline constexpr std::size_t kFeatures = 5;                      // P_in, Q_in, Q_out, N_in, N_out
inline constexpr std::size_t kStateSize = kMovements * kFeatures;
inline constexpr std::size_t kTypeClasses = 4;
inline constexpr std::size_t kTopologySize = kTypeClasses + 7;

// Type / phase-plan classes of the topology one-hot.
enum class JunctionClass { FourWay4, FourWay8, T3, Other };
JunctionClass junction_class(const sim::Network& net, int ix);

// One agent's view at one decision point, padded to the caps.
struct Observation {
  std::array<double, kStateSize> state{};             // row m: [P_in, Q_in, Q_out, N_in, N_out]
  std::array<std::uint8_t, kMovements> movement_mask{};
  std::array<double, kPhases * kMovements> phases{};  // row p: 1 on movements of phase p
  std::array<std::uint8_t, kPhases> phase_mask{};
  std::array<double, kTopologySize> topology{};
  int active_phase = 0;
  int num_phases = 0;
};

// [one-hot class, mean in-link length / 100 m, max in speed / 10 m/s,
//  in lanes / 10, movements / 36, mean out-link length / 100 m,
//  max out speed / 10 m/s, out lanes / 10]
std::array<double, kTopologySize> topology_vector(const sim::Network& net, int ix);

Observation build_observation(const sim::Simulator& sim, int ix);

}  // namespace cross::model

#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "cross/sim/network.h"
#include "cross/sim/scenario.h"

namespace cross::sim {

inline constexpr int kYellowTicks = 3;
inline constexpr int kGreenTicks = 10;
inline constexpr int kHeadwayTicks = 2;
inline constexpr double kDetectorRange = 50.0;
inline constexpr double kSlotLength = 7.5;
inline constexpr int kDetectorCap = 6;  // floor(50 / 7.5)

struct LaneReading {
  int queued = 0;  // Q, capped at kDetectorCap
  int moving = 0;  // N within kDetectorRange of the stop line, capped
};

// Detector view of one movement. q_in / n_in count the vehicles of this
// movement inside its incoming lane's detector window (for a shared lane the
// window's vehicles are split by movement, so they sum to the lane reading);
// q_out / n_out are the outgoing lane read at its own downstream stop line.
struct MovementReading {
  int q_in = 0;
  int q_out = 0;
  int n_in = 0;
  int n_out = 0;
};

struct SignalState {
  int phase = 0;
  int pending = 0;
  int yellow_left = 0;
  int green_left = 0;
};

struct MetricReport {
  double queue_veh = 0.0;        // queued vehicles per intersection, time-averaged
  double speed_mps = 0.0;        // mean over in-network vehicle-seconds, queued count as 0
  double completion_vps = 0.0;   // arrived vehicles per simulated second
  double trip_time_s = 0.0;      // arrived vehicles only
  double trip_delay_s = 0.0;     // trip time minus free-flow time, arrived only
  double trip_duration_s = 0.0;  // all departed vehicles, unfinished counted to the clock
  long departed = 0;
  long arrived = 0;
};

class Simulator {
 public:
  enum class Status : std::uint8_t { Pending, Traversing, Queued, Arrived };

  struct Vehicle {
    VehicleSpec spec;
    Status status = Status::Pending;
    int leg = 0;         // index into spec.route
    int lane = 0;        // lane on the current link
    int movement = -1;   // movement taken at the end of the current link, -1 on the exit link
    double dist = 0.0;   // metres from the start of the current link
    int arrive_time = -1;
    int free_flow = 0;
  };

  Simulator(std::shared_ptr<const Network> net, std::vector<VehicleSpec> vehicles, int episode_s = 3600);

  const Network& network() const { return *net_; }
  int clock() const { return clock_; }
  int episode_s() const { return episode_s_; }
  bool done() const { return clock_ >= episode_s_; }

  // Advances one 1 s tick: departures, travel, discharge, signal timers.
  void step();

  bool needs_decision(int ix) const;
  // Rejects out-of-range phases and calls made while yellow or green time
  // is still running.
  void apply_action(int ix, int phase);
  const SignalState& signal(int ix) const { return signals_[static_cast<std::size_t>(ix)]; }
  bool in_yellow(int ix) const { return signals_[static_cast<std::size_t>(ix)].yellow_left > 0; }

  LaneReading lane_reading(LaneRef lane) const;
  std::vector<MovementReading> read_detectors(int ix) const;
  // Minus the summed capped queue over the intersection's incoming lanes.
  double reward(int ix) const;

  // Uncapped queue of one movement (FIFO of vehicle ids, front discharges first).
  const std::deque<int>& movement_queue(int ix, int m) const { return queues_[static_cast<std::size_t>(ix)][static_cast<std::size_t>(m)]; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  long departed() const { return departed_; }
  long arrived() const { return arrived_; }
  long in_network() const { return in_network_; }
  // Vehicles discharged so far, in discharge order, per (intersection, movement).
  const std::vector<std::vector<std::vector<int>>>& discharge_log() const { return discharge_log_; }
  void set_discharge_logging(bool on) { log_discharges_ = on; }

  MetricReport metrics() const;

 private:
  void enter_link(int vid, int leg, int lane_hint);
  int choose_movement(int link, int next_link) const;

  std::shared_ptr<const Network> net_;
  int episode_s_;
  int clock_ = 0;
  std::vector<Vehicle> vehicles_;
  std::size_t next_departure_ = 0;
  std::vector<std::deque<int>> on_link_;                   // traversing vehicles per link, entry order
  std::vector<std::vector<std::deque<int>>> queues_;       // [intersection][movement]
  std::vector<std::vector<int>> next_discharge_;           // earliest tick of the next discharge
  std::vector<SignalState> signals_;
  std::vector<int> lane_queued_;                           // by dense lane id
  std::vector<std::deque<int>> lane_order_;                // queued vehicles per lane, join order
  std::vector<int> lane_assigned_;                         // queued + traversing, for lane choice
  bool log_discharges_ = false;
  std::vector<std::vector<std::vector<int>>> discharge_log_;

  long departed_ = 0;
  long arrived_ = 0;
  long in_network_ = 0;
  double queue_accum_ = 0.0;
  double speed_accum_ = 0.0;
  double speed_samples_ = 0.0;
};

}  // namespace cross::sim

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cross/model/cross_net.h"
#include "cross/sim/simulator.h"

namespace cross::control {

// Picks phases for the intersections that are at a decision boundary.
class Controller {
 public:
  virtual ~Controller() = default;
  // Called once per episode before the first tick.
  virtual void reset(const sim::Simulator& sim) { (void)sim; }
  virtual std::vector<int> act(const sim::Simulator& sim, std::span<const int> ready) = 0;
  virtual std::string name() const = 0;
};

// Green seconds per phase, cycled in order. Empty means equal splits of one
// switch interval (yellow + green) each.
struct FixedTimePlan {
  std::vector<int> splits_s;
};

// Phase whose window in the repeating cycle contains `clock`.
int fixed_time_phase(const FixedTimePlan& plan, int num_phases, int clock);

class FixedTime : public Controller {
 public:
  explicit FixedTime(FixedTimePlan plan = {}) : plan_(std::move(plan)) {}
  std::vector<int> act(const sim::Simulator& sim, std::span<const int> ready) override;
  std::string name() const override { return "fixed-time"; }

 private:
  FixedTimePlan plan_;
};

// sum over the phase's movements of (Q_in - Q_out), capped detector counts.
std::vector<double> phase_pressures(const sim::Intersection& inter, std::span<const sim::MovementReading> readings);
// argmax of phase_pressures, lowest index on ties.
int max_pressure_phase(const sim::Intersection& inter, std::span<const sim::MovementReading> readings);

class MaxPressure : public Controller {
 public:
  std::vector<int> act(const sim::Simulator& sim, std::span<const int> ready) override;
  std::string name() const override { return "max-pressure"; }
};

class RandomController : public Controller {
 public:
  explicit RandomController(std::uint64_t seed) : seed_(seed), rng_(seed) {}
  void reset(const sim::Simulator& sim) override;
  std::vector<int> act(const sim::Simulator& sim, std::span<const int> ready) override;
  std::string name() const override { return "random"; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

// Greedy (argmax) policy of a trained actor with per-intersection recurrent
// state.
class CrossController : public Controller {
 public:
  CrossController(std::shared_ptr<const model::CrossNet> actor, std::string label = "cross");
  void reset(const sim::Simulator& sim) override;
  std::vector<int> act(const sim::Simulator& sim, std::span<const int> ready) override;
  std::string name() const override { return label_; }

 private:
  std::shared_ptr<const model::CrossNet> actor_;
  std::string label_;
  std::vector<std::vector<double>> hidden_;
};

// Runs one full episode, asking the controller at every decision boundary.
sim::MetricReport run_episode(sim::Simulator& sim, Controller& controller);

}  // namespace cross::control

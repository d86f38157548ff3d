#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "cross/control/controllers.h"
#include "cross/sim/scenario.h"

namespace cross::control {

enum class ControllerKind { FixedTime, MaxPressure, Random, Cross, CrossNoPcc, CrossNoMoe };

struct ControllerSpec {
  ControllerKind kind = ControllerKind::FixedTime;
  FixedTimePlan plan;      // fixed-time
  std::string checkpoint;  // cross variants
  std::uint64_t seed = 0;  // random; mixed with the episode seed
  std::string label;       // defaults to the kind name

  // "fixed-time", "max-pressure", "random", "random:<seed>",
  // "cross=<ckpt>", "cross-no-pcc=<ckpt>", "cross-no-moe=<ckpt>"
  static ControllerSpec parse(const std::string& text);
  std::string name() const;
  // Throws std::invalid_argument when kind-specific parameters are missing.
  void validate() const;
};

std::string kind_name(ControllerKind k);

// Builds controllers for one spec. Checkpoints load once and are shared by
// every controller made afterwards; a cross variant whose checkpoint does not
// match the ablation (PCC / MoE present) is rejected.
class ControllerFactory {
 public:
  explicit ControllerFactory(ControllerSpec spec);
  std::unique_ptr<Controller> make(std::uint64_t episode_seed) const;
  const ControllerSpec& spec() const { return spec_; }

 private:
  ControllerSpec spec_;
  std::shared_ptr<const model::CrossNet> actor_;
};

// Runs one episode of `sc` with vehicles drawn from `vehicle_seed`.
sim::MetricReport run_scenario(const sim::Scenario& sc, Controller& ctl, std::uint64_t vehicle_seed);

struct CompareRow {
  std::string method;
  std::string scenario;
  std::uint64_t seed = 0;
  sim::MetricReport metrics;
};

// Every (method, scenario, seed) cell, in that nesting order. Cells run in
// parallel; the result order does not depend on the schedule.
std::vector<CompareRow> run_compare(const std::vector<ControllerSpec>& methods, const std::vector<sim::Scenario>& scenarios,
                                    const std::vector<std::uint64_t>& seeds);

inline constexpr const char* kMetricNames[6] = {"queue_veh",   "speed_mps",    "completion_vps",
                                                "trip_time_s", "trip_delay_s", "trip_duration_s"};
double metric_value(const sim::MetricReport& m, std::size_t i);

// One row per cell, full precision.
void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows);
// One row per (method, scenario): each metric as "mean(std)" over seeds.
void write_summary_csv(std::ostream& out, const std::vector<CompareRow>& rows);
// Bar chart of mean trip duration per method, one file per scenario;
// returns the paths written.
std::vector<std::filesystem::path> write_trip_duration_charts(const std::filesystem::path& dir,
                                                              const std::vector<CompareRow>& rows);

// 2x2 grid, 1200 s, congested demand: the scenario the training smoke and
// ablation experiments run on.
sim::Scenario smoke_scenario(std::uint64_t seed = 0);

}  // namespace cross::control

#pragma once

#include <cstdint>
#include <vector>

#include "cross/model/cross_net.h"
#include "cross/sim/scenario.h"

namespace cross::rl {

// Agent-steps of one or more episodes, each agent's trajectory contiguous and
// in time order. Immutable once collected.
struct Rollout {
  std::vector<model::Observation> obs;
  std::vector<model::Observation> next_obs;  // observation at the following decision (or episode end)
  std::vector<double> hidden_actor;          // N*H, recurrent state before the step
  std::vector<double> hidden_critic;
  std::vector<std::size_t> action;
  std::vector<double> logp;
  std::vector<double> value;
  std::vector<double> reward;
  std::vector<std::uint8_t> done;
  std::vector<int> agent;     // intersection index
  std::vector<int> scenario;  // index into the trainer's scenario list

  std::size_t size() const { return action.size(); }
  // Appends `other`, keeping trajectories contiguous.
  void append(const Rollout& other);
};

struct EpisodeStats {
  double mean_return = 0.0;  // per-agent sum of rewards, averaged over agents
  sim::MetricReport metrics;
};

// Rolls out one episode of `sc` with vehicles drawn from `vehicle_seed`,
// sampling actions from the actor with `action_seed`. Reward of a step is
// the mean of the reward op over the ticks of its interval.
Rollout collect_rollout(const sim::Scenario& sc, const model::CrossNet& actor, const model::CrossNet& critic,
                        std::uint64_t vehicle_seed, std::uint64_t action_seed, int scenario_index,
                        EpisodeStats* stats = nullptr);

}  // namespace cross::rl

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cross/autodiff/optim.h"
#include "cross/model/cross_net.h"
#include "cross/rl/ppo.h"
#include "cross/rl/rollout.h"
#include "cross/sim/scenario.h"

namespace cross::rl {

// Thrown when a loss component turns non-finite; names the component.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& component, int iteration)
      : std::runtime_error("non-finite loss component '" + component + "' at iteration " + std::to_string(iteration)),
        component_(component) {}
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

struct IterationLog {
  int iteration = 0;
  std::vector<double> scenario_return;  // per scenario, mean per-agent return
  std::vector<double> scenario_queue;   // per scenario, episode mean queue
  LossRecord losses;                    // averaged over epochs
  std::vector<double> expert_usage;     // actor f-hat, empty without MoE
  std::vector<double> cluster_usage;    // actor w-bar, empty without PCC
  std::uint64_t actor_hash = 0;         // parameters the rollouts ran with
  std::size_t samples = 0;
};

// Everything the PPO update reads, precomputed from a pooled rollout.
struct UpdateBatch {
  model::Batch actor_in;
  model::Batch critic_in;
  ad::Tensor next_state;
  std::vector<std::size_t> action;
  std::vector<double> old_logp;
  std::vector<double> advantages;  // normalised when configured
  std::vector<double> reward;
  std::vector<std::uint8_t> done;
  std::vector<long> next_index;  // following sample of the same trajectory, -1 at done
};

UpdateBatch prepare_update(const Rollout& r, const model::ModelConfig& actor_cfg, const model::ModelConfig& critic_cfg,
                           const TrainConfig& tc);

// Actor and critic objectives on one batch with the current parameters.
struct Objectives {
  ad::Tensor actor;
  ad::Tensor critic;
  LossRecord record;  // everything except grad norms
  model::CrossNet::Forward actor_fwd;
};
Objectives compute_objectives(const model::CrossNet& actor, const model::CrossNet& critic, const UpdateBatch& b,
                              const TrainConfig& tc);

class Trainer {
 public:
  Trainer(model::ModelConfig cfg, TrainConfig tc, std::vector<sim::Scenario> scenarios);

  // Rollouts (parallel over scenarios), then `epochs` PPO updates.
  IterationLog iterate();
  // Runs the configured number of iterations; `on_iteration` sees each log.
  std::vector<IterationLog> run(const std::function<void(const IterationLog&)>& on_iteration = {});

  // One PPO update on a given pooled rollout; exposed for tests.
  LossRecord update(const Rollout& r, int iteration);

  void save_checkpoint(const std::filesystem::path& file) const;

  model::CrossNet& actor() { return *actor_; }
  model::CrossNet& critic() { return *critic_; }
  std::shared_ptr<const model::CrossNet> actor_ptr() const { return actor_; }
  const std::vector<sim::Scenario>& scenarios() const { return scenarios_; }
  const TrainConfig& train_config() const { return tc_; }
  int iteration() const { return iteration_; }

 private:
  model::ModelConfig cfg_;
  TrainConfig tc_;
  std::vector<sim::Scenario> scenarios_;
  std::shared_ptr<model::CrossNet> actor_;
  std::shared_ptr<model::CrossNet> critic_;
  std::unique_ptr<ad::Adam> opt_actor_;
  std::unique_ptr<ad::Adam> opt_critic_;
  int iteration_ = 0;
};

// Learning-curve CSV: iteration, samples, return_<scenario>..., queue_<scenario>...,
// every loss column, expert_<m>..., cluster_<k>...
void write_curve_header(std::ostream& out, const std::vector<sim::Scenario>& scenarios, const model::ModelConfig& cfg);
void write_curve_row(std::ostream& out, const IterationLog& log, const model::ModelConfig& cfg);

// Checkpoint meta carries the model config; both networks are restored.
struct LoadedModel {
  model::ModelConfig cfg;
  std::shared_ptr<model::CrossNet> actor;
  std::shared_ptr<model::CrossNet> critic;
  nlohmann::json meta;
};
LoadedModel load_checkpoint(const std::filesystem::path& file);

// Greedy evaluation, one metric report per episode. Episode e draws vehicles
// with seed + e.
std::vector<sim::MetricReport> evaluate(std::shared_ptr<const model::CrossNet> actor, const sim::Scenario& sc,
                                        int episodes, std::uint64_t seed);

}  // namespace cross::rl

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cross/autodiff/tensor.h"
#include "cross/model/cross_net.h"

namespace cross::rl {

struct TrainConfig {
  double gamma = 0.95;
  double gae_lambda = 0.98;
  double clip = 0.2;
  int epochs = 6;
  double lr_actor = 1e-4;
  double lr_critic = 2e-4;
  double grad_clip = 10.0;
  double lambda_v = 0.5;
  double lambda_e = 0.01;
  double lambda_p = 0.05;
  double lambda_c = 0.1;
  double lambda_lb = 0.001;
  double lambda_se = 0.0001;
  bool normalize_advantages = true;
  int iterations = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct Gae {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// One trajectory. values[t] = V(s_t); `bootstrap` is V(s_T) after the last
// step (ignored when the last step is done).
Gae compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                double bootstrap, double gamma, double lambda);

// Zero mean, unit std; a constant vector maps to zeros.
std::vector<double> normalize(std::span<const double> x);

// -mean(min(k A, clip(k, 1-eps, 1+eps) A)), k = exp(new - old).
ad::Tensor ppo_actor_loss(const ad::Tensor& new_logp, std::span<const double> old_logp, std::span<const double> adv,
                          double clip);

// mean(lambda_v * (r + gamma V_next (1 - done) - V)^2); V_next is a constant.
ad::Tensor td_value_loss(const ad::Tensor& values, std::span<const double> rewards, std::span<const double> next_values,
                         std::span<const std::uint8_t> dones, double gamma, double lambda_v);

// Mean policy entropy over valid phases. log_probs is [B x 8] with masked
// entries reported as 0.
ad::Tensor policy_entropy(const ad::Tensor& log_probs, std::span<const std::uint8_t> phase_mask);

// Auxiliary terms of one network (actor or critic).
struct AuxLosses {
  ad::Tensor pred;  // undefined without PCC
  ad::Tensor cont;
  ad::Tensor div;
  ad::Tensor pcc;
  ad::Tensor lb;  // undefined without MoE
  ad::Tensor se;
  ad::Tensor moe;
};
AuxLosses aux_losses(const model::CrossNet::Forward& f, const model::ModelConfig& cfg, const ad::Tensor& next_state,
                     std::span<const std::uint8_t> entry_mask, const TrainConfig& tc);

// lambda_p pred + lambda_c pcc + moe, skipping undefined parts.
ad::Tensor aux_total(const AuxLosses& a, const TrainConfig& tc);

// Named scalar values of one update, in a fixed column order.
struct LossRecord {
  std::vector<std::pair<std::string, double>> values;
  void set(const std::string& name, double v);
  double get(const std::string& name) const;
};

// Column names written to the learning curve, in order.
const std::vector<std::string>& loss_columns();

}  // namespace cross::rl

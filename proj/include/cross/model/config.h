#pragma once

#include <cstddef>

#include "json.hpp"

namespace cross::model {

struct ModelConfig {
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::size_t pcc_hidden = 64;
  std::size_t clusters = 6;
  std::size_t experts = 6;
  std::size_t top_k = 2;
  std::size_t router_hidden = 64;
  double tau_k = 0.1;  // assignment temperature
  double tau_c = 0.1;  // contrastive temperature
  double tau_r = 1.0;  // router temperature
  double lambda_div = 0.1;
  bool use_pcc = true;
  bool use_moe = true;
  // Stop gradients through the soft target of the contrastive loss.
  bool detach_soft_target = true;
  // Initial per-head weight of the phase/movement structure bias in attention.
  double attention_bias_init = 2.0;

  // Throws std::invalid_argument on inconsistent sizes.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace cross::model

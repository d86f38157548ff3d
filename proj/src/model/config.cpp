#include "cross/model/config.h"

#include <stdexcept>

namespace cross::model {

void ModelConfig::validate() const {
  if (hidden == 0 || heads == 0 || hidden % heads != 0) throw std::invalid_argument("model: hidden must be a multiple of heads");
  if (pcc_hidden == 0 || clusters == 0) throw std::invalid_argument("model: PCC sizes must be positive");
  if (experts == 0 || top_k == 0 || top_k > experts) throw std::invalid_argument("model: need 1 <= top_k <= experts");
  if (!(tau_k > 0.0 && tau_c > 0.0 && tau_r > 0.0)) throw std::invalid_argument("model: temperatures must be positive");
  if (lambda_div < 0.0) throw std::invalid_argument("model: lambda_div must be >= 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"hidden", c.hidden},       {"heads", c.heads},
       {"pcc_hidden", c.pcc_hidden}, {"clusters", c.clusters},
       {"experts", c.experts},     {"top_k", c.top_k},
       {"router_hidden", c.router_hidden}, {"tau_k", c.tau_k},
       {"tau_c", c.tau_c},         {"tau_r", c.tau_r},
       {"lambda_div", c.lambda_div}, {"use_pcc", c.use_pcc},
       {"use_moe", c.use_moe},     {"detach_soft_target", c.detach_soft_target},
       {"attention_bias_init", c.attention_bias_init}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.hidden = j.value("hidden", d.hidden);
  c.heads = j.value("heads", d.heads);
  c.pcc_hidden = j.value("pcc_hidden", d.pcc_hidden);
  c.clusters = j.value("clusters", d.clusters);
  c.experts = j.value("experts", d.experts);
  c.top_k = j.value("top_k", d.top_k);
  c.router_hidden = j.value("router_hidden", d.router_hidden);
  c.tau_k = j.value("tau_k", d.tau_k);
  c.tau_c = j.value("tau_c", d.tau_c);
  c.tau_r = j.value("tau_r", d.tau_r);
  c.lambda_div = j.value("lambda_div", d.lambda_div);
  c.use_pcc = j.value("use_pcc", d.use_pcc);
  c.use_moe = j.value("use_moe", d.use_moe);
  c.detach_soft_target = j.value("detach_soft_target", d.detach_soft_target);
  c.attention_bias_init = j.value("attention_bias_init", d.attention_bias_init);
}

}  // namespace cross::model

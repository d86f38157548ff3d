#include "cross/rl/ppo.h"

#include <cmath>
#include <stdexcept>

#include "cross/autodiff/ops.h"

namespace cross::rl {

using namespace cross::ad;

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(gae_lambda >= 0.0 && gae_lambda <= 1.0))
    throw std::invalid_argument("train: gamma and gae_lambda must lie in [0, 1]");
  if (!(clip > 0.0)) throw std::invalid_argument("train: clip must be positive");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (lr_actor < 0.0 || lr_critic < 0.0) throw std::invalid_argument("train: learning rates must be >= 0");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("train: grad_clip must be positive");
  for (double l : {lambda_v, lambda_e, lambda_p, lambda_c, lambda_lb, lambda_se})
    if (l < 0.0) throw std::invalid_argument("train: loss weights must be >= 0");
  if (iterations < 0) throw std::invalid_argument("train: iterations must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"gamma", c.gamma},         {"gae_lambda", c.gae_lambda},   {"clip", c.clip},
       {"epochs", c.epochs},       {"lr_actor", c.lr_actor},       {"lr_critic", c.lr_critic},
       {"grad_clip", c.grad_clip}, {"lambda_v", c.lambda_v},       {"lambda_e", c.lambda_e},
       {"lambda_p", c.lambda_p},   {"lambda_c", c.lambda_c},       {"lambda_lb", c.lambda_lb},
       {"lambda_se", c.lambda_se}, {"normalize_advantages", c.normalize_advantages},
       {"iterations", c.iterations}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.gamma = j.value("gamma", d.gamma);
  c.gae_lambda = j.value("gae_lambda", d.gae_lambda);
  c.clip = j.value("clip", d.clip);
  c.epochs = j.value("epochs", d.epochs);
  c.lr_actor = j.value("lr_actor", d.lr_actor);
  c.lr_critic = j.value("lr_critic", d.lr_critic);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.lambda_v = j.value("lambda_v", d.lambda_v);
  c.lambda_e = j.value("lambda_e", d.lambda_e);
  c.lambda_p = j.value("lambda_p", d.lambda_p);
  c.lambda_c = j.value("lambda_c", d.lambda_c);
  c.lambda_lb = j.value("lambda_lb", d.lambda_lb);
  c.lambda_se = j.value("lambda_se", d.lambda_se);
  c.normalize_advantages = j.value("normalize_advantages", d.normalize_advantages);
  c.iterations = j.value("iterations", d.iterations);
  c.seed = j.value("seed", d.seed);
  c.validate();
}

Gae compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw std::invalid_argument("compute_gae: length mismatch");
  Gae g;
  g.advantages.assign(n, 0.0);
  g.returns.assign(n, 0.0);
  double next_value = bootstrap, next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    g.advantages[k] = next_adv;
    g.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return g;
}

std::vector<double> normalize(std::span<const double> x) {
  std::vector<double> out(x.size(), 0.0);
  if (x.empty()) return out;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size()));
  if (sd < 1e-12) return out;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
  return out;
}

Tensor ppo_actor_loss(const Tensor& new_logp, std::span<const double> old_logp, std::span<const double> adv,
                      double clip) {
  const std::size_t n = new_logp.size();
  if (old_logp.size() != n || adv.size() != n) throw std::invalid_argument("ppo_actor_loss: length mismatch");
  const Tensor old_t = Tensor::from({n}, std::vector<double>(old_logp.begin(), old_logp.end()));
  const Tensor a = Tensor::from({n}, std::vector<double>(adv.begin(), adv.end()));
  const Tensor ratio = exp(sub(new_logp, old_t));
  const Tensor surr = minimum(mul(ratio, a), mul(clamp(ratio, 1.0 - clip, 1.0 + clip), a));
  return scale(mean(surr), -1.0);
}

Tensor td_value_loss(const Tensor& values, std::span<const double> rewards, std::span<const double> next_values,
                     std::span<const std::uint8_t> dones, double gamma, double lambda_v) {
  const std::size_t n = values.size();
  if (rewards.size() != n || next_values.size() != n || dones.size() != n)
    throw std::invalid_argument("td_value_loss: length mismatch");
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) target[i] = rewards[i] + gamma * (dones[i] ? 0.0 : next_values[i]);
  const Tensor t = Tensor::from({n}, std::move(target));
  return mean(scale(square(sub(t, values)), lambda_v));
}

Tensor policy_entropy(const Tensor& log_probs, std::span<const std::uint8_t> phase_mask) {
  // exp of a masked entry is exp(0) = 1, so zero those before the entropy
  std::vector<double> keep(phase_mask.begin(), phase_mask.end());
  const Tensor probs = mul(exp(log_probs), Tensor::from(log_probs.shape(), std::move(keep)));
  return mean(entropy_rows(probs));
}

AuxLosses aux_losses(const model::CrossNet::Forward& f, const model::ModelConfig& cfg, const Tensor& next_state,
                     std::span<const std::uint8_t> entry_mask, const TrainConfig& tc) {
  AuxLosses a;
  if (f.pcc) {
    a.pred = model::loss_pred(f.pcc->s_hat, next_state, entry_mask);
    a.cont = model::loss_cont(f.pcc->sims, f.pcc->w, cfg.tau_c, cfg.detach_soft_target);
    a.div = model::loss_div(f.pcc->w);
    a.pcc = model::loss_pcc(a.cont, a.div, cfg.lambda_div);
  }
  if (f.moe.routing.alpha.defined()) {
    a.lb = model::loss_lb(f.moe.routing.alpha);
    a.se = model::loss_se(f.moe.routing.alpha);
    a.moe = model::loss_moe(a.lb, a.se, tc.lambda_lb, tc.lambda_se);
  }
  return a;
}

Tensor aux_total(const AuxLosses& a, const TrainConfig& tc) {
  Tensor total = Tensor::scalar(0.0);
  if (a.pred.defined()) total = add(total, scale(a.pred, tc.lambda_p));
  if (a.pcc.defined()) total = add(total, scale(a.pcc, tc.lambda_c));
  if (a.moe.defined()) total = add(total, a.moe);
  return total;
}

void LossRecord::set(const std::string& name, double v) {
  for (auto& [k, x] : values)
    if (k == name) {
      x = v;
      return;
    }
  values.emplace_back(name, v);
}

double LossRecord::get(const std::string& name) const {
  for (const auto& [k, x] : values)
    if (k == name) return x;
  throw std::out_of_range("LossRecord: no value '" + name + "'");
}

const std::vector<std::string>& loss_columns() {
  static const std::vector<std::string> cols{
      "actor_total", "critic_total", "policy", "entropy", "value", "pred_a", "cont_a", "div_a",
      "pcc_a",       "lb_a",         "se_a",   "moe_a",   "pred_c", "cont_c", "div_c", "pcc_c",
      "lb_c",        "se_c",         "moe_c",  "grad_norm_a", "grad_norm_c"};
  return cols;
}

}  // namespace cross::rl

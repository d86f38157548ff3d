#include "cross/model/pcc.h"

#include <cmath>
#include <stdexcept>

namespace cross::model {

using namespace cross::ad;

Pcc Pcc::build(ParamStore& store, const std::string& prefix, const ModelConfig& cfg, std::mt19937_64& rng) {
  const std::size_t d = cfg.pcc_hidden;
  Pcc p;
  p.layer1 = Dense::make(store, prefix + "pcc.layer1", kPccInput, 2 * d, rng);
  p.layer2 = Dense::make(store, prefix + "pcc.layer2", d, 2 * d, rng);
  p.predict = store.add_uniform(prefix + "pcc.predict", {d, kStateSize}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  p.project = Dense::make(store, prefix + "pcc.project", d, d, rng);
  p.ln_gamma = store.add(prefix + "pcc.ln.gamma", Tensor::full({d}, 1.0));
  p.ln_beta = store.add(prefix + "pcc.ln.beta", Tensor::zeros({d}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> c(cfg.clusters * d);
  for (std::size_t k = 0; k < cfg.clusters; ++k) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      c[k * d + j] = normal(rng);
      norm += c[k * d + j] * c[k * d + j];
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) c[k * d + j] /= norm;
  }
  p.centers = store.add(prefix + "pcc.centers", Tensor::from({cfg.clusters, d}, std::move(c)));
  return p;
}

Pcc::Out Pcc::forward(const Batch& b, const ModelConfig& cfg) const {
  Out o;
  const Tensor x = concat_cols({b.state_flat, b.active_row, b.topology});
  o.z = glu(layer2(glu(layer1(x))));
  o.s_hat = matmul(o.z, predict);
  const Tensor phi = layer_norm(project(o.z), ln_gamma, ln_beta);
  o.sims = cosine_similarity(phi, centers);
  o.w = softmax(o.sims, cfg.tau_k);
  o.z_hat = matmul(o.w, centers);
  return o;
}

Tensor loss_pred(const Tensor& s_hat, const Tensor& target, Mask entry_mask) {
  return masked_mse(s_hat, target, entry_mask);
}

Tensor loss_cont(const Tensor& sims, const Tensor& w, double tau_c, bool detach_target) {
  const Tensor target = detach_target ? detach(w) : w;
  const Tensor per_sample = sum_rows(mul(target, log_softmax(sims, tau_c)));
  return scale(mean(per_sample), -1.0);
}

Tensor loss_div(const Tensor& w) {
  if (w.rank() != 2 || w.rows() == 0) throw std::invalid_argument("loss_div: empty batch");
  const std::size_t k = w.cols();
  if (k == 1) return scale(sum(w), 0.0);
  const Tensor avg = reshape(mean_over_rows(w), {1, k});
  return add_scalar(scale(sum(entropy_rows(avg)), -1.0 / std::log(static_cast<double>(k))), 1.0);
}

Tensor loss_pcc(const Tensor& cont, const Tensor& div, double lambda_div) { return add(cont, scale(div, lambda_div)); }

}  // namespace cross::model

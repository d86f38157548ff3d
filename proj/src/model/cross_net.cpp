#include "cross/model/cross_net.h"

#include <random>

namespace cross::model {

using namespace cross::ad;

const char* role_name(Role r) { return r == Role::Actor ? "actor" : "critic"; }

CrossNet::CrossNet(const ModelConfig& cfg, Role role, std::uint64_t seed) : cfg_(cfg), role_(role) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::string prefix = std::string(role_name(role)) + ".";
  gfe_ = Gfe::build(store_, prefix, cfg_, rng);
  if (cfg_.use_pcc) pcc_ = Pcc::build(store_, prefix, cfg_, rng);
  moe_ = Moe::build(store_, prefix, cfg_, rng);
  head_ = Dense::make(store_, prefix + (role == Role::Actor ? "policy" : "value"), cfg_.hidden, 1, rng);
}

CrossNet::Forward CrossNet::forward(const Batch& b) const {
  Forward f;
  f.gfe = gfe_.forward(b, cfg_);
  if (pcc_) f.pcc = pcc_->forward(b, cfg_);
  f.moe = moe_.forward(b, f.gfe.h_sp, f.pcc ? f.pcc->z_hat : Tensor(), cfg_);
  if (role_ == Role::Actor) {
    const Tensor logits = reshape(head_(f.moe.h_moe, b.phase_mask), {b.size, kPhases});
    f.log_probs = log_softmax(logits, 1.0, b.phase_mask);
  } else {
    f.value = reshape(head_(mean_pool(f.moe.h_moe, b.phase_mask, kPhases)), {b.size});
  }
  return f;
}

}  // namespace cross::model

#pragma once

#include <random>
#include <string>
#include <vector>

#include "cross/model/batch.h"
#include "cross/model/config.h"
#include "cross/model/layers.h"

namespace cross::model {

struct Routing {
  ad::Tensor logits;  // [B x E], already divided by tau_r
  ad::Tensor alpha;   // [B x E], exactly k nonzero per row
  std::vector<std::vector<std::size_t>> selected;  // per sample, by descending logit
};

// Top-k selection with ties going to the lower index. Result sorted by
// descending value, then index.
std::vector<std::size_t> top_k(std::span<const double> values, std::size_t k);

// Softmax restricted to the top-k entries of each row; the rest are exactly 0.
Routing route_from_logits(const ad::Tensor& logits, std::size_t k);

struct Expert {
  Dense hidden;
  Dense out;
  ad::Tensor operator()(const ad::Tensor& x) const { return out(ad::relu(hidden(x))); }
};

// Expert pool plus router. With use_moe off this is a single expert and no
// router.
struct Moe {
  Dense router1;  // (H + D) -> R
  Dense router2;  // R -> E
  std::vector<Expert> experts;

  static Moe build(ad::ParamStore& store, const std::string& prefix, const ModelConfig& cfg, std::mt19937_64& rng);

  struct Out {
    Routing routing;   // empty when use_moe is off
    ad::Tensor h_moe;  // [B*8 x H], zero rows for padded phases
  };
  // z_hat may be undefined (no PCC): the router then sees zeros in its place.
  Out forward(const Batch& b, const ad::Tensor& h_sp, const ad::Tensor& z_hat, const ModelConfig& cfg) const;
};

// KL(f || uniform) of normalised expert usage; log N_E minus entropy.
ad::Tensor loss_lb(const ad::Tensor& alpha);
// Mean per-sample routing entropy.
ad::Tensor loss_se(const ad::Tensor& alpha);
ad::Tensor loss_moe(const ad::Tensor& lb, const ad::Tensor& se, double lambda_lb, double lambda_se);

}  // namespace cross::model

#pragma once

#include <random>
#include <string>

#include "cross/model/batch.h"
#include "cross/model/config.h"
#include "cross/model/layers.h"

namespace cross::model {

inline constexpr std::size_t kPccInput = kStateSize + kMovements + kTopologySize;

// Predictive contrastive clustering: dynamics MLP, next-state prediction and
// soft assignment onto K learnable centres.
struct Pcc {
  Dense layer1;        // 227 -> 2D, GLU
  Dense layer2;        // D -> 2D, GLU
  ad::Tensor predict;  // D x 180
  Dense project;       // D -> D, then layer norm
  ad::Tensor ln_gamma;
  ad::Tensor ln_beta;
  ad::Tensor centers;  // K x D, unit rows at init

  static Pcc build(ad::ParamStore& store, const std::string& prefix, const ModelConfig& cfg, std::mt19937_64& rng);

  struct Out {
    ad::Tensor z;       // [B x D] dynamics representation
    ad::Tensor s_hat;   // [B x 180] predicted next state
    ad::Tensor sims;    // [B x K] cosine similarities
    ad::Tensor w;       // [B x K] soft assignment
    ad::Tensor z_hat;   // [B x D] convex combination of centres
  };
  Out forward(const Batch& b, const ModelConfig& cfg) const;
};

// MSE over valid state entries only.
ad::Tensor loss_pred(const ad::Tensor& s_hat, const ad::Tensor& target, ad::Mask entry_mask);
// -mean_b sum_k w_k log softmax(sims / tau_c)_k
ad::Tensor loss_cont(const ad::Tensor& sims, const ad::Tensor& w, double tau_c, bool detach_target);
// 1 - H(mean_b w) / log K. Rejects an empty batch.
ad::Tensor loss_div(const ad::Tensor& w);
ad::Tensor loss_pcc(const ad::Tensor& cont, const ad::Tensor& div, double lambda_div);

}  // namespace cross::model

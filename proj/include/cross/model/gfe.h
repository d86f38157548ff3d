#pragma once

#include <random>
#include <string>

#include "cross/model/batch.h"
#include "cross/model/config.h"
#include "cross/model/layers.h"

namespace cross::model {

// General feature extraction: GRU over the encoded traffic state, an MLP over
// phase rows, and phase-queries-movements cross-attention.
struct Gfe {
  Dense encoder;      // 180 -> H
  Dense gru_input;    // H -> 3H (update, reset, candidate)
  ad::Tensor gru_zr;  // H x 2H
  ad::Tensor gru_h;   // H x H
  Dense phase1;       // 36 -> H
  Dense phase2;       // H -> H
  Dense key_state;    // 5 -> H, per movement, no bias
  Dense value_state;
  ad::Tensor value_hidden;  // H x H, adds the recurrent state to every value
  Dense query;        // H -> H
  Dense output;       // H -> H
  ad::Tensor structure_bias;  // [heads]

  static Gfe build(ad::ParamStore& store, const std::string& prefix, const ModelConfig& cfg, std::mt19937_64& rng);

  struct Out {
    ad::Tensor h_s;   // [B x H] new recurrent state
    ad::Tensor h_p;   // [B*8 x H]
    ad::Tensor h_sp;  // [B*8 x H], zero rows for padded phases
  };
  Out forward(const Batch& b, const ModelConfig& cfg) const;

  // One GRU step; exposed for tests.
  ad::Tensor gru(const ad::Tensor& x, const ad::Tensor& h) const;
};

}  // namespace cross::model

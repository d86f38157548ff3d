#include "cross/model/gfe.h"

#include <cmath>

namespace cross::model {

using namespace cross::ad;

Gfe Gfe::build(ParamStore& store, const std::string& prefix, const ModelConfig& cfg, std::mt19937_64& rng) {
  const std::size_t h = cfg.hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  Gfe g;
  g.encoder = Dense::make(store, prefix + "encoder", kStateSize, h, rng);
  g.gru_input = Dense::make(store, prefix + "gru.input", h, 3 * h, rng);
  g.gru_zr = store.add_uniform(prefix + "gru.zr", {h, 2 * h}, bound, rng);
  g.gru_h = store.add_uniform(prefix + "gru.h", {h, h}, bound, rng);
  g.phase1 = Dense::make(store, prefix + "phase1", kMovements, h, rng);
  g.phase2 = Dense::make(store, prefix + "phase2", h, h, rng);
  // a per-sample offset shared by all keys cancels in the softmax, so keys
  // carry neither a bias nor the recurrent state
  g.key_state = Dense::make(store, prefix + "attn.key_state", kFeatures, h, rng, false);
  g.value_state = Dense::make(store, prefix + "attn.value_state", kFeatures, h, rng);
  g.value_hidden = store.add_uniform(prefix + "attn.value_hidden", {h, h}, bound, rng);
  g.query = Dense::make(store, prefix + "attn.query", h, h, rng);
  g.output = Dense::make(store, prefix + "attn.output", h, h, rng);
  g.structure_bias = store.add(prefix + "attn.structure_bias", Tensor::full({cfg.heads}, cfg.attention_bias_init));
  return g;
}

Tensor Gfe::gru(const Tensor& x, const Tensor& h) const {
  const std::size_t n = gru_h.rows();
  const Tensor gx = gru_input(x);
  const Tensor gh = matmul(h, gru_zr);
  const Tensor z = sigmoid(add(slice_cols(gx, 0, n), slice_cols(gh, 0, n)));
  const Tensor r = sigmoid(add(slice_cols(gx, n, 2 * n), slice_cols(gh, n, 2 * n)));
  const Tensor cand = tanh(add(slice_cols(gx, 2 * n, 3 * n), matmul(mul(r, h), gru_h)));
  return add(h, mul(z, sub(cand, h)));
}

Gfe::Out Gfe::forward(const Batch& b, const ModelConfig& cfg) const {
  Out o;
  o.h_s = gru(relu(encoder(b.state_flat)), b.hidden);
  o.h_p = phase2(relu(phase1(b.phases, b.phase_mask)), b.phase_mask);
  const Tensor keys = key_state(b.state, b.movement_mask);
  const Tensor values = add(value_state(b.state, b.movement_mask), repeat_rows(matmul(o.h_s, value_hidden), kMovements));
  const Tensor queries = query(o.h_p, b.phase_mask);
  const Tensor att = multi_head_attention(queries, keys, values, b.phase_mask, b.movement_mask, cfg.heads, kPhases,
                                          kMovements, structure_bias, b.structure);
  o.h_sp = add(output(att, b.phase_mask), o.h_p);
  return o;
}

}  // namespace cross::model

#include "cross/model/batch.h"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace cross::model {

Batch make_batch(std::span<const Observation* const> obs, std::span<const double> hidden, std::size_t hidden_size) {
  const std::size_t n = obs.size();
  if (!hidden.empty() && hidden.size() != n * hidden_size) {
    throw std::invalid_argument("make_batch: hidden has " + std::to_string(hidden.size()) + " values, expected " +
                                std::to_string(n * hidden_size));
  }
  Batch b;
  b.size = n;
  std::vector<double> state(n * kStateSize, 0.0), phases(n * kPhases * kMovements, 0.0), active(n * kMovements, 0.0),
      topo(n * kTopologySize, 0.0);
  b.movement_mask.assign(n * kMovements, 0);
  b.phase_mask.assign(n * kPhases, 0);
  b.entry_mask.assign(n * kStateSize, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& o = *obs[i];
    bool any_phase = false;
    for (std::size_t p = 0; p < kPhases; ++p) any_phase = any_phase || o.phase_mask[p];
    if (!any_phase) throw std::invalid_argument("make_batch: sample " + std::to_string(i) + " has no valid phase");
    if (o.active_phase < 0 || o.active_phase >= static_cast<int>(kPhases) || !o.phase_mask[static_cast<std::size_t>(o.active_phase)]) {
      throw std::invalid_argument("make_batch: sample " + std::to_string(i) + " has an invalid active phase");
    }
    for (std::size_t m = 0; m < kMovements; ++m) {
      const bool ok = o.movement_mask[m] != 0;
      b.movement_mask[i * kMovements + m] = ok;
      if (!ok) continue;
      for (std::size_t f = 0; f < kFeatures; ++f) {
        state[i * kStateSize + m * kFeatures + f] = o.state[m * kFeatures + f];
        b.entry_mask[i * kStateSize + m * kFeatures + f] = 1;
      }
    }
    for (std::size_t p = 0; p < kPhases; ++p) {
      const bool ok = o.phase_mask[p] != 0;
      b.phase_mask[i * kPhases + p] = ok;
      if (!ok) continue;
      for (std::size_t m = 0; m < kMovements; ++m) {
        if (o.movement_mask[m]) phases[(i * kPhases + p) * kMovements + m] = o.phases[p * kMovements + m];
      }
    }
    const std::size_t ap = static_cast<std::size_t>(o.active_phase);
    std::copy_n(&phases[(i * kPhases + ap) * kMovements], kMovements, &active[i * kMovements]);
    std::copy(o.topology.begin(), o.topology.end(), &topo[i * kTopologySize]);
  }
  b.structure = phases;
  b.state = ad::Tensor::from({n * kMovements, kFeatures}, state);
  b.state_flat = ad::Tensor::from({n, kStateSize}, std::move(state));
  b.phases = ad::Tensor::from({n * kPhases, kMovements}, std::move(phases));
  b.active_row = ad::Tensor::from({n, kMovements}, std::move(active));
  b.topology = ad::Tensor::from({n, kTopologySize}, std::move(topo));
  b.hidden = hidden.empty() ? ad::Tensor::zeros({n, hidden_size})
                            : ad::Tensor::from({n, hidden_size}, std::vector<double>(hidden.begin(), hidden.end()));
  return b;
}

ad::Tensor state_targets(std::span<const Observation* const> next) {
  std::vector<double> out(next.size() * kStateSize, 0.0);
  for (std::size_t i = 0; i < next.size(); ++i)
    for (std::size_t m = 0; m < kMovements; ++m) {
      if (!next[i]->movement_mask[m]) continue;
      for (std::size_t f = 0; f < kFeatures; ++f) out[i * kStateSize + m * kFeatures + f] = next[i]->state[m * kFeatures + f];
    }
  return ad::Tensor::from({next.size(), kStateSize}, std::move(out));
}

}  // namespace cross::model

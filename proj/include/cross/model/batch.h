#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cross/autodiff/tensor.h"
#include "cross/model/observation.h"

namespace cross::model {

// B agent-steps stacked for one forward pass. Everything outside the
// movement / phase masks is zeroed here, so padded garbage never reaches a
// learnable op.
struct Batch {
  std::size_t size = 0;
  ad::Tensor state;       // [B*36 x 5]
  ad::Tensor state_flat;  // [B x 180]
  ad::Tensor phases;      // [B*8 x 36]
  ad::Tensor active_row;  // [B x 36], row of the active phase
  ad::Tensor topology;    // [B x 11]
  ad::Tensor hidden;      // [B x H], recurrent state before this step
  std::vector<std::uint8_t> movement_mask;  // B*36
  std::vector<std::uint8_t> phase_mask;     // B*8
  std::vector<std::uint8_t> entry_mask;     // B*180, valid state entries
  std::vector<double> structure;            // B*8*36 copy of `phases`
};

// `hidden` holds B*H values, or is empty for zero initial states.
Batch make_batch(std::span<const Observation* const> obs, std::span<const double> hidden, std::size_t hidden_size);

// Flattened, masked next-step states [B x 180] used as prediction targets.
ad::Tensor state_targets(std::span<const Observation* const> next);

}  // namespace cross::model

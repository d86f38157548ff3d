#pragma once

#include <cstdint>
#include <vector>

#include "cross/autodiff/tensor.h"

namespace cross::ad {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moment buffers are sized on
// construction and must keep matching the parameter shapes.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  // Throws if any parameter lacks a grad. Grads are left untouched.
  void step();
  void zero_grad();

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::int64_t step_count_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Returns the global L2 norm of all grads before clipping. When it exceeds
// max_norm every grad is scaled by max_norm / norm. Params without a grad are
// skipped.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

}  // namespace cross::ad

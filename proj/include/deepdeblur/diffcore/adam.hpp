#pragma once

#include <cstddef>
#include <vector>

#include "deepdeblur/diffcore/tensor.hpp"

namespace deepdeblur::diff {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. The parameter list must keep the same order and shapes
// across calls; moment buffers are created on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  std::size_t steps_taken() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace deepdeblur::diff

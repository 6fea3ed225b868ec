#pragma once

#include <vector>

#include "passt/tensor.hpp"

namespace passt {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled-weight-decay Adam with bias correction. Moment buffers are laid
// out per parameter in registration order; step() consumes the gradients
// currently accumulated on each parameter.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  void step();
  void zero_grad();
  long step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  AdamWConfig& config() { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWConfig cfg_;
  long step_ = 0;
};

}  // namespace passt

#pragma once

#include <vector>

#include "robustlab/tensor.hpp"

namespace robustlab {

struct AdamConfig {
  real_t lr = real_t(0.01);
  real_t beta1 = real_t(0.9);
  real_t beta2 = real_t(0.999);
  real_t eps = real_t(1e-8);
  real_t weight_decay = real_t(0);
  real_t lr_decay = real_t(1);  // multiplied in at epoch boundaries
};

// Adam with bias correction. Weight decay enters as an L2 term added to the
// gradient; the learning rate decays only when the caller signals an epoch
// boundary. Non-finite gradients are rejected before any state is touched.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void step();
  void zero_grad();
  void advance_epoch() { lr_ *= cfg_.lr_decay; }

  int64_t step_count() const { return t_; }
  real_t current_lr() const { return lr_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<real_t>> m_, v_;
  AdamConfig cfg_;
  real_t lr_;
  int64_t t_ = 0;
};

}  // namespace robustlab

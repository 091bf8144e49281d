#pragma once

#include <cstdint>
#include <vector>

#include "fend/tensor.hpp"

namespace fend::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Parameter order must stay fixed across steps.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // lr_scale multiplies the base learning rate (used for schedule decay).
  void step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
            double lr_scale = 1.0);

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace fend::num

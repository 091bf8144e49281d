#include "fend/optim.hpp"

#include <cmath>

#include "fend/errors.hpp"

namespace fend::num {

void Adam::step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                double lr_scale) {
  if (params.size() != grads.size()) {
    throw ContractError("Adam::step: params/grads size mismatch");
  }
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(Tensor::zeros(p->shape()));
      v_.emplace_back(Tensor::zeros(p->shape()));
    }
  }
  if (m_.size() != params.size()) {
    throw ContractError("Adam::step: parameter set changed between steps");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double alpha = cfg_.lr * lr_scale * std::sqrt(bc2) / bc1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t e = 0; e < p.size(); ++e) {
      m[e] = cfg_.beta1 * m[e] + (1.0 - cfg_.beta1) * g[e];
      v[e] = cfg_.beta2 * v[e] + (1.0 - cfg_.beta2) * g[e] * g[e];
      p[e] -= alpha * m[e] / (std::sqrt(v[e]) + cfg_.eps);
    }
  }
}

}  // namespace fend::num

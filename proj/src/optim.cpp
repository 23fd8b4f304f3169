#include "robustlab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace robustlab {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg), lr_(cfg.lr) {
  if (!(cfg_.lr > real_t(0))) throw std::invalid_argument("adam: learning rate must be positive");
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(static_cast<size_t>(params_[i].numel()), real_t(0));
    v_[i].assign(static_cast<size_t>(params_[i].numel()), real_t(0));
  }
}

void Adam::step() {
  // validate before mutating: a rejected step leaves the state unchanged
  for (Tensor& p : params_) {
    auto g = p.grad();
    for (size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(static_cast<double>(g[i]))) throw std::runtime_error("adam: non-finite gradient rejected");
  }
  ++t_;
  const real_t bc1 = real_t(1) - std::pow(cfg_.beta1, static_cast<real_t>(t_));
  const real_t bc2 = real_t(1) - std::pow(cfg_.beta2, static_cast<real_t>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    auto g = p.grad();
    auto val = p.data();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < val.size(); ++i) {
      const real_t grad = (i < g.size() ? g[i] : real_t(0)) + cfg_.weight_decay * val[i];
      m[i] = cfg_.beta1 * m[i] + (real_t(1) - cfg_.beta1) * grad;
      v[i] = cfg_.beta2 * v[i] + (real_t(1) - cfg_.beta2) * grad * grad;
      const real_t mhat = m[i] / bc1;
      const real_t vhat = v[i] / bc2;
      val[i] -= lr_ * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace robustlab

#include "tomoforge/nn/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tomoforge::nn {

void AdamWConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("AdamW betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("AdamW eps must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be nonnegative");
}

template <class T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> first_moment,
                  std::span<T> second_moment, std::uint64_t step, const AdamWConfig& cfg) {
  if (grad.size() != param.size() || first_moment.size() != param.size() ||
      second_moment.size() != param.size()) {
    throw std::invalid_argument("adamw_update: size mismatch (param " +
                                std::to_string(param.size()) + ", grad " +
                                std::to_string(grad.size()) + ")");
  }
  if (step == 0) throw std::invalid_argument("adamw_update: step numbering starts at 1");
  const double t = static_cast<double>(step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T one = T{1};
  const T step_size = static_cast<T>(cfg.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.eps);
  const T shrink = static_cast<T>(decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    first_moment[i] = b1 * first_moment[i] + (one - b1) * g;
    second_moment[i] = b2 * second_moment[i] + (one - b2) * g * g;
    const T denom = std::sqrt(second_moment[i]) * inv_sqrt_bc2 + eps;
    param[i] = param[i] * shrink - step_size * first_moment[i] / denom;
  }
}

template <class T>
Optimizer<T>::Optimizer(std::vector<Var<T>> params, OptimizerKind kind, AdamWConfig cfg)
    : params_(std::move(params)), kind_(kind), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(kind_ == OptimizerKind::adamw ? p->value.size() : 0, T{0});
    v_.emplace_back(kind_ == OptimizerKind::adamw ? p->value.size() : 0, T{0});
  }
}

template <class T>
void Optimizer<T>::step() {
  ++step_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Node<T>& p = *params_[k];
    Tensor4<T>& g = p.grad_buffer();
    if (kind_ == OptimizerKind::adamw) {
      adamw_update<T>(p.value.values(), g.values(), m_[k], v_[k], step_, cfg_);
    } else {
      const T lr = static_cast<T>(cfg_.lr);
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * g[i];
    }
  }
}

template void adamw_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                  std::span<float>, std::uint64_t, const AdamWConfig&);
template void adamw_update<double>(std::span<double>, std::span<const double>,
                                   std::span<double>, std::span<double>, std::uint64_t,
                                   const AdamWConfig&);
template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace tomoforge::nn

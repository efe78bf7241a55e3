#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tomoforge/nn/autodiff.hpp"

namespace tomoforge::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;

  void validate() const;
};

/// One AdamW update of a single parameter tensor with decoupled weight decay
/// and bias correction. `step` is the 1-based step number after increment.
/// Throws std::invalid_argument on size mismatch.
template <class T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> first_moment,
                  std::span<T> second_moment, std::uint64_t step, const AdamWConfig& cfg);

enum class OptimizerKind { adamw, sgd };

/// Owns the moment estimates of a parameter list.
template <class T>
class Optimizer {
 public:
  Optimizer(std::vector<Var<T>> params, OptimizerKind kind, AdamWConfig cfg);

  /// Applies one update from the accumulated gradients; parameters without a
  /// gradient buffer are treated as having zero gradient.
  void step();

  [[nodiscard]] std::uint64_t step_count() const noexcept { return step_; }
  [[nodiscard]] const AdamWConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] OptimizerKind kind() const noexcept { return kind_; }
  [[nodiscard]] const std::vector<std::vector<T>>& first_moments() const noexcept { return m_; }
  [[nodiscard]] const std::vector<std::vector<T>>& second_moments() const noexcept { return v_; }

 private:
  std::vector<Var<T>> params_;
  OptimizerKind kind_;
  AdamWConfig cfg_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::uint64_t step_ = 0;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace tomoforge::nn

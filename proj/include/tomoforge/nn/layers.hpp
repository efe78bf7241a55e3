#pragma once

// Functional forward/backward rules for the non-convolution operators.
// Statistics are accumulated in double regardless of T.

#include <cstddef>
#include <span>
#include <vector>

#include "tomoforge/nn/tensor.hpp"

namespace tomoforge::nn {

inline constexpr double kDefaultLeakySlope = 0.01;
inline constexpr double kDefaultBatchNormEps = 1e-5;

/// Per-channel values the batch-norm backward pass needs.
template <class T>
struct BatchNormCache {
  Tensor4<T> normalized;        // x_hat
  std::vector<double> inv_std;  // 1 / sqrt(var + eps), per channel
};

/// Normalizes each channel over (batch, height, width) with batch statistics,
/// then applies gamma/beta. Throws if a channel has fewer than two elements.
template <class T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, std::span<const T> gamma,
                             std::span<const T> beta, double eps, BatchNormCache<T>& cache);

template <class T>
void batchnorm_backward(const Tensor4<T>& grad_out, std::span<const T> gamma,
                        const BatchNormCache<T>& cache, Tensor4<T>& grad_in,
                        std::span<T> grad_gamma, std::span<T> grad_beta);

/// max(0, x) + phi * min(0, x).
template <class T>
Tensor4<T> leaky_relu_forward(const Tensor4<T>& x, double phi);

/// Slope 1 where x > 0 and phi elsewhere (phi is also used at x == 0).
template <class T>
void leaky_relu_backward(const Tensor4<T>& grad_out, const Tensor4<T>& x, double phi,
                         Tensor4<T>& grad_in);

}  // namespace tomoforge::nn

#pragma once

// The plain convolutional network trained per image:
//
//   Conv(in -> C) -> LeakyReLU
//   (depth - 2) x [Conv(C -> C) -> BatchNorm -> LeakyReLU]
//   Conv(C -> out)
//
// With the defaults (depth 30, C = 64, in = out = 1) that is 30 convolution
// layers, 28 of them followed by batch normalization.

#include <cstdint>
#include <string>
#include <vector>

#include "tomoforge/nn/autodiff.hpp"
#include "tomoforge/nn/layers.hpp"

namespace tomoforge::nn {

struct NetworkSpec {
  std::size_t depth = 30;  // convolution layers, >= 2
  std::size_t channels = 64;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  double leaky_slope = kDefaultLeakySlope;
  double bn_eps = kDefaultBatchNormEps;

  /// Closed-form parameter count of the architecture above.
  [[nodiscard]] std::size_t parameter_count() const noexcept;
  void validate() const;
};

/// Name and shape of one parameter tensor, in network order.
struct ParamInfo {
  std::string name;
  Shape4 shape;
};

template <class T>
class Network {
 public:
  /// Kaiming-normal weights (fan-in, LeakyReLU gain), zero biases, unit
  /// gamma, zero beta. Identical (spec, seed) gives identical parameters.
  Network(NetworkSpec spec, std::uint64_t seed);

  [[nodiscard]] const NetworkSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  [[nodiscard]] const std::vector<Var<T>>& parameters() const noexcept { return params_; }
  [[nodiscard]] std::vector<ParamInfo> layout() const;
  [[nodiscard]] std::size_t parameter_count() const noexcept;

  /// Records the forward pass on `tape`. Input must be (N, in_channels, H, W).
  Var<T> forward(Tape<T>& tape, const Var<T>& input) const;

  /// Forward pass without keeping a tape.
  [[nodiscard]] Tensor4<T> infer(const Tensor4<T>& input) const;

  void zero_grad();

  /// Throws NonFiniteError naming the parameter if any value is NaN/Inf.
  void check_parameters() const;

 private:
  struct ConvRef {
    Var<T> weight;
    Var<T> bias;
  };
  struct NormRef {
    Var<T> gamma;
    Var<T> beta;
  };

  NetworkSpec spec_;
  std::uint64_t seed_;
  std::vector<Var<T>> params_;
  std::vector<ConvRef> convs_;
  std::vector<NormRef> norms_;  // norms_[i] follows convs_[i + 1]
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace tomoforge::nn

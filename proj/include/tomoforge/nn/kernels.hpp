#pragma once

// Compute kernels of the nn engine.
//
// Every kernel has a scalar reference implementation (templated, used for the
// double-precision gradient checks) and, for the single-precision 3x3
// convolution that dominates training time, AVX2 and AVX-512 variants chosen
// at runtime. The SIMD variants are equivalence-tested against the scalar one.

#include <cstddef>
#include <span>
#include <string_view>

namespace tomoforge::nn {

/// Shape of a shape-preserving 3x3 convolution (stride 1, zero padding 1).
struct ConvDims {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  [[nodiscard]] std::size_t input_size() const noexcept {
    return batch * in_channels * height * width;
  }
  [[nodiscard]] std::size_t output_size() const noexcept {
    return batch * out_channels * height * width;
  }
  [[nodiscard]] std::size_t weight_size() const noexcept { return out_channels * in_channels * 9; }
};

enum class Isa { scalar, avx2, avx512 };

std::string_view to_string(Isa isa) noexcept;
Isa isa_from_string(std::string_view name);

/// True when both the build and the running CPU support `isa`.
bool isa_supported(Isa isa) noexcept;
/// Widest supported ISA, unless TOMOFORGE_ISA names another supported one.
Isa detect_isa();
/// ISA used by the float dispatch entry points below.
Isa active_isa();
void set_active_isa(Isa isa);

namespace scalar {

// Weights are (out, in, 3, 3) row-major; activations NCHW.
template <class T>
void conv3x3_forward(std::span<const T> in, std::span<const T> weights, std::span<const T> bias,
                     std::span<T> out, const ConvDims& d);

// grad_in may be empty (input does not need a gradient). grad_weights and
// grad_bias are overwritten, not accumulated.
template <class T>
void conv3x3_backward(std::span<const T> grad_out, std::span<const T> in,
                      std::span<const T> weights, std::span<T> grad_in,
                      std::span<T> grad_weights, std::span<T> grad_bias, const ConvDims& d);

}  // namespace scalar

using ConvForwardF32 = void (*)(std::span<const float>, std::span<const float>,
                                std::span<const float>, std::span<float>, const ConvDims&);
using ConvBackwardF32 = void (*)(std::span<const float>, std::span<const float>,
                                 std::span<const float>, std::span<float>, std::span<float>,
                                 std::span<float>, const ConvDims&);

struct ConvKernelsF32 {
  Isa isa;
  ConvForwardF32 forward;
  ConvBackwardF32 backward;
};

/// Kernel table for a specific ISA; throws if the ISA is unsupported.
const ConvKernelsF32& conv_kernels(Isa isa);

/// Precision-generic entry points: double always runs the scalar reference,
/// float runs the active ISA.
template <class T>
void conv3x3_forward(std::span<const T> in, std::span<const T> weights, std::span<const T> bias,
                     std::span<T> out, const ConvDims& d);
template <class T>
void conv3x3_backward(std::span<const T> grad_out, std::span<const T> in,
                      std::span<const T> weights, std::span<T> grad_in,
                      std::span<T> grad_weights, std::span<T> grad_bias, const ConvDims& d);

}  // namespace tomoforge::nn

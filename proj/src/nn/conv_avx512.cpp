// Built with -mavx512f; only reached after a runtime CPU check.

#include <immintrin.h>

#include "conv_simd_impl.hpp"

namespace tomoforge::nn::detail {
namespace {

struct VecAvx512 {
  using reg = __m512;
  static constexpr int width = 16;
  static reg zero() { return _mm512_setzero_ps(); }
  static reg set1(float v) { return _mm512_set1_ps(v); }
  static reg loadu(const float* p) { return _mm512_loadu_ps(p); }
  static void storeu(float* p, reg v) { _mm512_storeu_ps(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm512_fmadd_ps(a, b, c); }
  static float hsum(reg v) { return _mm512_reduce_add_ps(v); }
};

// 8 x 48 forward tile (24 accumulators), 4 x 4 weight-gradient tile.
using Fwd = ConvSimd<VecAvx512, 8, 3>;

void forward(std::span<const float> in, std::span<const float> w, std::span<const float> b,
             std::span<float> out, const ConvDims& d) {
  Fwd::forward(in, w, b, out, d);
}

void backward(std::span<const float> go, std::span<const float> in, std::span<const float> w,
              std::span<float> gi, std::span<float> gw, std::span<float> gb, const ConvDims& d) {
  conv_backward_simd<VecAvx512, 8, 3, 4, 4, 6, 4>(go, in, w, gi, gw, gb, d);
}

}  // namespace

extern const ConvKernelsF32 kConvAvx512{Isa::avx512, &forward, &backward};

}  // namespace tomoforge::nn::detail

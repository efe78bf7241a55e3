// Built with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include "conv_simd_impl.hpp"

namespace tomoforge::nn::detail {
namespace {

struct VecAvx2 {
  using reg = __m256;
  static constexpr int width = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg loadu(const float* p) { return _mm256_loadu_ps(p); }
  static void storeu(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
};

// 4 x 24 forward tile (12 accumulators), 2 x 4 weight-gradient tile.
using Fwd = ConvSimd<VecAvx2, 4, 3>;

void forward(std::span<const float> in, std::span<const float> w, std::span<const float> b,
             std::span<float> out, const ConvDims& d) {
  Fwd::forward(in, w, b, out, d);
}

void backward(std::span<const float> go, std::span<const float> in, std::span<const float> w,
              std::span<float> gi, std::span<float> gw, std::span<float> gb, const ConvDims& d) {
  conv_backward_simd<VecAvx2, 4, 3, 2, 4, 3, 4>(go, in, w, gi, gw, gb, d);
}

}  // namespace

extern const ConvKernelsF32 kConvAvx2{Isa::avx2, &forward, &backward};

}  // namespace tomoforge::nn::detail

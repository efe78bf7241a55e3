#include "tomoforge/nn/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace tomoforge::nn {

namespace detail {
#if TOMOFORGE_HAVE_AVX2
extern const ConvKernelsF32 kConvAvx2;
#endif
#if TOMOFORGE_HAVE_AVX512
extern const ConvKernelsF32 kConvAvx512;
#endif
}  // namespace detail

namespace scalar {

template <class T>
void conv3x3_forward(std::span<const T> in, std::span<const T> weights, std::span<const T> bias,
                     std::span<T> out, const ConvDims& d) {
  const std::size_t H = d.height;
  const std::size_t W = d.width;
  const std::size_t plane = H * W;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      T* dst = out.data() + (n * d.out_channels + o) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = bias[o];
      for (std::size_t c = 0; c < d.in_channels; ++c) {
        const T* src = in.data() + (n * d.in_channels + c) * plane;
        const T* k = weights.data() + (o * d.in_channels + c) * 9;
        for (std::size_t kh = 0; kh < 3; ++kh) {
          for (std::size_t kw = 0; kw < 3; ++kw) {
            const T wv = k[kh * 3 + kw];
            // Output rows/cols whose tap (kh, kw) lands inside the input.
            const std::size_t h0 = kh == 0 ? 1 : 0;
            const std::size_t h1 = kh == 2 ? H - 1 : H;
            const std::size_t w0 = kw == 0 ? 1 : 0;
            const std::size_t w1 = kw == 2 ? W - 1 : W;
            for (std::size_t h = h0; h < h1; ++h) {
              const T* row = src + (h + kh - 1) * W + (kw - 1);
              T* orow = dst + h * W;
              for (std::size_t w = w0; w < w1; ++w) orow[w] += wv * row[w];
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv3x3_backward(std::span<const T> grad_out, std::span<const T> in,
                      std::span<const T> weights, std::span<T> grad_in,
                      std::span<T> grad_weights, std::span<T> grad_bias, const ConvDims& d) {
  const std::size_t H = d.height;
  const std::size_t W = d.width;
  const std::size_t plane = H * W;
  std::fill(grad_weights.begin(), grad_weights.end(), T{0});
  std::fill(grad_bias.begin(), grad_bias.end(), T{0});
  if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), T{0});

  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      const T* g = grad_out.data() + (n * d.out_channels + o) * plane;
      T sum{0};
      for (std::size_t i = 0; i < plane; ++i) sum += g[i];
      grad_bias[o] += sum;
      for (std::size_t c = 0; c < d.in_channels; ++c) {
        const T* src = in.data() + (n * d.in_channels + c) * plane;
        T* gin = grad_in.empty() ? nullptr : grad_in.data() + (n * d.in_channels + c) * plane;
        const T* k = weights.data() + (o * d.in_channels + c) * 9;
        T* gk = grad_weights.data() + (o * d.in_channels + c) * 9;
        for (std::size_t kh = 0; kh < 3; ++kh) {
          for (std::size_t kw = 0; kw < 3; ++kw) {
            const std::size_t h0 = kh == 0 ? 1 : 0;
            const std::size_t h1 = kh == 2 ? H - 1 : H;
            const std::size_t w0 = kw == 0 ? 1 : 0;
            const std::size_t w1 = kw == 2 ? W - 1 : W;
            const T wv = k[kh * 3 + kw];
            T acc{0};
            for (std::size_t h = h0; h < h1; ++h) {
              const std::size_t base = (h + kh - 1) * W + (kw - 1);
              const T* grow = g + h * W;
              for (std::size_t w = w0; w < w1; ++w) {
                acc += grow[w] * src[base + w];
                if (gin != nullptr) gin[base + w] += grow[w] * wv;
              }
            }
            gk[kh * 3 + kw] += acc;
          }
        }
      }
    }
  }
}

template void conv3x3_forward<float>(std::span<const float>, std::span<const float>,
                                     std::span<const float>, std::span<float>, const ConvDims&);
template void conv3x3_forward<double>(std::span<const double>, std::span<const double>,
                                      std::span<const double>, std::span<double>,
                                      const ConvDims&);
template void conv3x3_backward<float>(std::span<const float>, std::span<const float>,
                                      std::span<const float>, std::span<float>, std::span<float>,
                                      std::span<float>, const ConvDims&);
template void conv3x3_backward<double>(std::span<const double>, std::span<const double>,
                                       std::span<const double>, std::span<double>,
                                       std::span<double>, std::span<double>, const ConvDims&);

}  // namespace scalar

namespace {

void scalar_forward_f32(std::span<const float> in, std::span<const float> w,
                        std::span<const float> b, std::span<float> out, const ConvDims& d) {
  scalar::conv3x3_forward<float>(in, w, b, out, d);
}

void scalar_backward_f32(std::span<const float> go, std::span<const float> in,
                         std::span<const float> w, std::span<float> gi, std::span<float> gw,
                         std::span<float> gb, const ConvDims& d) {
  scalar::conv3x3_backward<float>(go, in, w, gi, gw, gb, d);
}

const ConvKernelsF32 kConvScalar{Isa::scalar, &scalar_forward_f32, &scalar_backward_f32};

bool cpu_has(Isa isa) noexcept {
#if defined(__x86_64__) || defined(__i386__)
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512:
      return __builtin_cpu_supports("avx512f");
  }
  return false;
#else
  return isa == Isa::scalar;
#endif
}

bool built_with(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return TOMOFORGE_HAVE_AVX2 != 0;
    case Isa::avx512:
      return TOMOFORGE_HAVE_AVX512 != 0;
  }
  return false;
}

std::atomic<int>& active_slot() {
  static std::atomic<int> slot{static_cast<int>(detect_isa())};
  return slot;
}

void check_dims(std::size_t in, std::size_t w, std::size_t b, std::size_t out,
                const ConvDims& d) {
  if (d.height == 0 || d.width == 0) throw std::invalid_argument("conv3x3: empty spatial extent");
  if (in != d.input_size() || w != d.weight_size() || b != d.out_channels ||
      out != d.output_size()) {
    throw std::invalid_argument("conv3x3: buffer sizes do not match dims (in " +
                                std::to_string(d.in_channels) + ", out " +
                                std::to_string(d.out_channels) + ")");
  }
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::avx512:
      return "avx512";
  }
  return "unknown";
}

Isa isa_from_string(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "avx512") return Isa::avx512;
  throw std::invalid_argument("unknown ISA '" + std::string(name) + "'");
}

bool isa_supported(Isa isa) noexcept { return built_with(isa) && cpu_has(isa); }

Isa detect_isa() {
  if (const char* env = std::getenv("TOMOFORGE_ISA"); env != nullptr && *env != '\0') {
    const Isa requested = isa_from_string(env);
    if (!isa_supported(requested)) {
      throw std::runtime_error("TOMOFORGE_ISA=" + std::string(env) + " is not supported here");
    }
    return requested;
  }
  if (isa_supported(Isa::avx512)) return Isa::avx512;
  if (isa_supported(Isa::avx2)) return Isa::avx2;
  return Isa::scalar;
}

Isa active_isa() { return static_cast<Isa>(active_slot().load(std::memory_order_relaxed)); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA " + std::string(to_string(isa)) + " is not supported here");
  }
  active_slot().store(static_cast<int>(isa), std::memory_order_relaxed);
}

const ConvKernelsF32& conv_kernels(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA " + std::string(to_string(isa)) + " is not supported here");
  }
  switch (isa) {
#if TOMOFORGE_HAVE_AVX512
    case Isa::avx512:
      return detail::kConvAvx512;
#endif
#if TOMOFORGE_HAVE_AVX2
    case Isa::avx2:
      return detail::kConvAvx2;
#endif
    default:
      return kConvScalar;
  }
}

template <>
void conv3x3_forward<double>(std::span<const double> in, std::span<const double> w,
                             std::span<const double> b, std::span<double> out,
                             const ConvDims& d) {
  check_dims(in.size(), w.size(), b.size(), out.size(), d);
  scalar::conv3x3_forward<double>(in, w, b, out, d);
}

template <>
void conv3x3_forward<float>(std::span<const float> in, std::span<const float> w,
                            std::span<const float> b, std::span<float> out, const ConvDims& d) {
  check_dims(in.size(), w.size(), b.size(), out.size(), d);
  conv_kernels(active_isa()).forward(in, w, b, out, d);
}

template <>
void conv3x3_backward<double>(std::span<const double> go, std::span<const double> in,
                              std::span<const double> w, std::span<double> gi,
                              std::span<double> gw, std::span<double> gb, const ConvDims& d) {
  check_dims(in.size(), w.size(), gb.size(), go.size(), d);
  if (gw.size() != w.size() || (!gi.empty() && gi.size() != in.size())) {
    throw std::invalid_argument("conv3x3_backward: gradient buffer size mismatch");
  }
  scalar::conv3x3_backward<double>(go, in, w, gi, gw, gb, d);
}

template <>
void conv3x3_backward<float>(std::span<const float> go, std::span<const float> in,
                             std::span<const float> w, std::span<float> gi, std::span<float> gw,
                             std::span<float> gb, const ConvDims& d) {
  check_dims(in.size(), w.size(), gb.size(), go.size(), d);
  if (gw.size() != w.size() || (!gi.empty() && gi.size() != in.size())) {
    throw std::invalid_argument("conv3x3_backward: gradient buffer size mismatch");
  }
  conv_kernels(active_isa()).backward(go, in, w, gi, gw, gb, d);
}

}  // namespace tomoforge::nn

#include "tomoforge/nn/layers.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>

namespace tomoforge::nn {

std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.batch) + ", " + std::to_string(s.channels) + ", " +
         std::to_string(s.height) + ", " + std::to_string(s.width) + ")";
}

template <>
std::size_t first_non_finite<float>(std::span<const float> v) noexcept {
  // Exponent bits all set means Inf or NaN; the OR-reduction vectorizes.
  constexpr std::uint32_t kExp = 0x7f800000u;
  constexpr std::size_t kBlock = 4096;
  for (std::size_t b = 0; b < v.size(); b += kBlock) {
    const std::size_t e = std::min(v.size(), b + kBlock);
    std::uint32_t any = 0;
    for (std::size_t i = b; i < e; ++i) {
      std::uint32_t u;
      std::memcpy(&u, &v[i], sizeof u);
      any |= static_cast<std::uint32_t>((u & kExp) == kExp);
    }
    if (any != 0) {
      for (std::size_t i = b; i < e; ++i) {
        if (!std::isfinite(v[i])) return i;
      }
    }
  }
  return npos;
}

template <>
std::size_t first_non_finite<double>(std::span<const double> v) noexcept {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return i;
  }
  return npos;
}

template <class T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, std::span<const T> gamma,
                             std::span<const T> beta, double eps, BatchNormCache<T>& cache) {
  const Shape4 s = x.shape();
  const std::size_t m = s.batch * s.plane();
  if (m < 2) {
    throw std::invalid_argument("batchnorm: each channel needs at least two elements, got " +
                                std::to_string(m));
  }
  if (gamma.size() != s.channels || beta.size() != s.channels) {
    throw std::invalid_argument("batchnorm: affine parameter size does not match channels");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("batchnorm: eps must be positive");

  Tensor4<T> y(s);
  cache.normalized = Tensor4<T>(s);
  cache.inv_std.assign(s.channels, 0.0);
  const std::size_t plane = s.plane();
  for (std::size_t c = 0; c < s.channels; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < s.batch; ++n) {
      const T* p = x.data() + x.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) sum += static_cast<double>(p[i]);
    }
    const double mean = sum / static_cast<double>(m);
    double sq = 0.0;
    for (std::size_t n = 0; n < s.batch; ++n) {
      const T* p = x.data() + x.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = static_cast<double>(p[i]) - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.inv_std[c] = inv;
    const double g = static_cast<double>(gamma[c]);
    const double b = static_cast<double>(beta[c]);
    for (std::size_t n = 0; n < s.batch; ++n) {
      const std::size_t off = x.offset(n, c, 0, 0);
      const T* p = x.data() + off;
      T* xh = cache.normalized.data() + off;
      T* q = y.data() + off;
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (static_cast<double>(p[i]) - mean) * inv;
        xh[i] = static_cast<T>(h);
        q[i] = static_cast<T>(g * h + b);
      }
    }
  }
  return y;
}

template <class T>
void batchnorm_backward(const Tensor4<T>& grad_out, std::span<const T> gamma,
                        const BatchNormCache<T>& cache, Tensor4<T>& grad_in,
                        std::span<T> grad_gamma, std::span<T> grad_beta) {
  const Shape4 s = grad_out.shape();
  if (!(cache.normalized.shape() == s)) {
    throw std::invalid_argument("batchnorm_backward: gradient shape does not match forward");
  }
  const std::size_t m = s.batch * s.plane();
  const std::size_t plane = s.plane();
  if (!(grad_in.shape() == s)) grad_in = Tensor4<T>(s);
  for (std::size_t c = 0; c < s.channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < s.batch; ++n) {
      const std::size_t off = grad_out.offset(n, c, 0, 0);
      const T* dy = grad_out.data() + off;
      const T* xh = cache.normalized.data() + off;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += static_cast<double>(dy[i]);
        sum_dy_xh += static_cast<double>(dy[i]) * static_cast<double>(xh[i]);
      }
    }
    grad_beta[c] = static_cast<T>(sum_dy);
    grad_gamma[c] = static_cast<T>(sum_dy_xh);
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c];
    const double mean_dy = sum_dy / static_cast<double>(m);
    const double mean_dy_xh = sum_dy_xh / static_cast<double>(m);
    for (std::size_t n = 0; n < s.batch; ++n) {
      const std::size_t off = grad_out.offset(n, c, 0, 0);
      const T* dy = grad_out.data() + off;
      const T* xh = cache.normalized.data() + off;
      T* dx = grad_in.data() + off;
      for (std::size_t i = 0; i < plane; ++i) {
        dx[i] = static_cast<T>(
            scale * (static_cast<double>(dy[i]) - mean_dy - static_cast<double>(xh[i]) * mean_dy_xh));
      }
    }
  }
}

template <class T>
Tensor4<T> leaky_relu_forward(const Tensor4<T>& x, double phi) {
  Tensor4<T> y(x.shape());
  const T slope = static_cast<T>(phi);
  const T* p = x.data();
  T* q = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) q[i] = p[i] > T{0} ? p[i] : slope * p[i];
  return y;
}

template <class T>
void leaky_relu_backward(const Tensor4<T>& grad_out, const Tensor4<T>& x, double phi,
                         Tensor4<T>& grad_in) {
  if (!(grad_out.shape() == x.shape())) {
    throw std::invalid_argument("leaky_relu_backward: gradient shape does not match input");
  }
  if (!(grad_in.shape() == x.shape())) grad_in = Tensor4<T>(x.shape());
  const T slope = static_cast<T>(phi);
  const T* g = grad_out.data();
  const T* p = x.data();
  T* d = grad_in.data();
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = p[i] > T{0} ? g[i] : slope * g[i];
}

#define TOMOFORGE_INSTANTIATE(T)                                                              \
  template Tensor4<T> batchnorm_forward<T>(const Tensor4<T>&, std::span<const T>,             \
                                           std::span<const T>, double, BatchNormCache<T>&);   \
  template void batchnorm_backward<T>(const Tensor4<T>&, std::span<const T>,                  \
                                      const BatchNormCache<T>&, Tensor4<T>&, std::span<T>,    \
                                      std::span<T>);                                          \
  template Tensor4<T> leaky_relu_forward<T>(const Tensor4<T>&, double);                       \
  template void leaky_relu_backward<T>(const Tensor4<T>&, const Tensor4<T>&, double,          \
                                       Tensor4<T>&);

TOMOFORGE_INSTANTIATE(float)
TOMOFORGE_INSTANTIATE(double)

#undef TOMOFORGE_INSTANTIATE

}  // namespace tomoforge::nn

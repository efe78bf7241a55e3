#pragma once

#include <limits>

#include "tomoforge/ct/image.hpp"

namespace tomoforge {

struct SsimConfig {
  double k1 = 0.01;
  double k2 = 0.03;
  std::size_t window = 7;  // uniform window side, odd
  /// Dynamic range; a non-positive value means max(x) - min(x) of the reference.
  double dynamic_range = 0.0;

  void validate() const;
};

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mse(const Image& x_hat, const Image& x);

/// 10 log10(max(x)^2 / MSE). Identical images give kPsnrIdentical (+inf);
/// a constant reference throws.
double psnr(const Image& x_hat, const Image& x);

/// Mean SSIM over every fully interior window position, with
/// C1 = (k1 L)^2 and C2 = (k2 L)^2.
/// Throws on a constant reference unless cfg.dynamic_range is set.
double ssim(const Image& x_hat, const Image& x, const SsimConfig& cfg = {});

}  // namespace tomoforge

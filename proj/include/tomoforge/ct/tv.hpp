#pragma once

#include <vector>

#include "tomoforge/ct/geometry.hpp"
#include "tomoforge/ct/image.hpp"

namespace tomoforge {

inline constexpr double kDefaultTvLambda = 2.15e-7;

struct TvConfig {
  double lambda = kDefaultTvLambda;
  std::size_t iterations = 200;
  // tau = ratio / L, sigma = 1 / (ratio L). Below 1 the primal step is damped,
  // which keeps the objective from overshooting in the first iterations.
  double step_ratio = 0.3;
  std::size_t power_iterations = 30;

  void validate() const;
};

struct TvResult {
  Image image;
  std::vector<double> objective;  // value after each iteration
  double operator_norm = 0.0;     // estimate of ||[A; s grad]||
};

/// 1/2 ||Ax - y||^2 + lambda * anisotropic_tv_sum(x).
double tv_objective(const Image& x, const Sinogram& y, const FanBeamGeometry& geom, double lambda);

/// Chambolle-Pock primal-dual iterations on min 1/2||Ax - y||^2 + lambda ||grad x||_1
/// starting from `init` with zero dual variables.
TvResult tv_reconstruct_report(const Sinogram& sino, const FanBeamGeometry& geom,
                               const TvConfig& cfg, const Image& init);

Image tv_reconstruct(const Sinogram& sino, const FanBeamGeometry& geom, const TvConfig& cfg,
                     const Image& init);

}  // namespace tomoforge

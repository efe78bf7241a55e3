#include "tomoforge/ct/tv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tomoforge/ct/gradient.hpp"
#include "tomoforge/ct/projector.hpp"
#include "tomoforge/random.hpp"

namespace tomoforge {

void TvConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("tv: lambda must be >= 0");
  if (!(step_ratio > 0.0) || !std::isfinite(step_ratio)) {
    throw std::invalid_argument("tv: step_ratio must be > 0");
  }
  if (power_iterations == 0) throw std::invalid_argument("tv: power_iterations must be >= 1");
}

double tv_objective(const Image& x, const Sinogram& y, const FanBeamGeometry& geom, double lambda) {
  const Sinogram ax = project(x, geom);
  check_sinogram_shape(y, geom, "tv_objective");
  double r = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = ax.data[i] - y.data[i];
    r += d * d;
  }
  return 0.5 * r + lambda * anisotropic_tv_sum(x);
}

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Largest singular value of [A; s grad] by power iteration on K^T K.
double power_norm(const FanBeamGeometry& geom, double s, std::size_t iters) {
  Image x(geom.rows, geom.cols);
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = uniform01(0x7f4a7c15, 1, i) - 0.25;
  double lam = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    const double n = norm2(x.data);
    if (n == 0.0) return 0.0;
    for (double& v : x.data) v /= n;
    Image y = backproject(project(x, geom), geom);
    if (s != 0.0) {
      const Image g = gradient_adjoint(gradient(x));
      for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += s * s * g.data[i];
    }
    lam = norm2(y.data);  // Rayleigh growth of the unit vector
    x = std::move(y);
  }
  return std::sqrt(lam);
}

}  // namespace

TvResult tv_reconstruct_report(const Sinogram& sino, const FanBeamGeometry& geom,
                               const TvConfig& cfg, const Image& init) {
  cfg.validate();
  geom.validate();
  check_sinogram_shape(sino, geom, "tv_reconstruct");
  check_image_shape(init, geom, "tv_reconstruct init");
  require_finite(sino.data, "tv_reconstruct sinogram");
  require_finite(init.data, "tv_reconstruct init");
  TvResult res;
  res.image = init;
  if (cfg.iterations == 0) return res;

  // The difference operator is scaled by s so both blocks of K have similar
  // norms; lambda ||grad x||_1 == (lambda / s) ||s grad x||_1.
  const double norm_a = power_norm(geom, 0.0, cfg.power_iterations);
  const double s = norm_a > 0.0 ? norm_a / std::sqrt(8.0) : 1.0;
  // With lambda = 0 the dual of the difference block stays at zero, so only A
  // limits the step sizes.
  const double L = 1.02 * (cfg.lambda > 0.0 ? power_norm(geom, s, cfg.power_iterations) : norm_a);
  res.operator_norm = L;
  const double tau = 0.99 * cfg.step_ratio / L;
  const double sigma = 0.99 / (cfg.step_ratio * L);
  const double bound = cfg.lambda / s;

  Image& x = res.image;
  Image xbar = x;
  Sinogram p(geom.num_angles, geom.num_bins);
  ImageGradient q{Image(geom.rows, geom.cols), Image(geom.rows, geom.cols)};
  res.objective.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Sinogram ax = project(xbar, geom);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p.data[i] = (p.data[i] + sigma * (ax.data[i] - sino.data[i])) / (1.0 + sigma);
    }
    const ImageGradient g = gradient(xbar);
    for (std::size_t i = 0; i < x.size(); ++i) {
      q.dx.data[i] = std::clamp(q.dx.data[i] + sigma * s * g.dx.data[i], -bound, bound);
      q.dy.data[i] = std::clamp(q.dy.data[i] + sigma * s * g.dy.data[i], -bound, bound);
    }
    const Image atp = backproject(p, geom);
    const Image gtq = gradient_adjoint(q);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double next = x.data[i] - tau * (atp.data[i] + s * gtq.data[i]);
      xbar.data[i] = 2.0 * next - x.data[i];
      x.data[i] = next;
    }
    res.objective.push_back(tv_objective(x, sino, geom, cfg.lambda));
  }
  require_finite(x.data, "tv_reconstruct result");
  return res;
}

Image tv_reconstruct(const Sinogram& sino, const FanBeamGeometry& geom, const TvConfig& cfg,
                     const Image& init) {
  return tv_reconstruct_report(sino, geom, cfg, init).image;
}

}  // namespace tomoforge

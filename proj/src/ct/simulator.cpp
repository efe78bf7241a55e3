#include "tomoforge/ct/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tomoforge/ct/projector.hpp"
#include "tomoforge/log.hpp"

namespace tomoforge {

Image normalize(const Image& img, bool* degenerate) {
  require_finite(img.data, "normalize");
  Image out(img.rows, img.cols);
  if (img.data.empty()) {
    if (degenerate) *degenerate = true;
    return out;
  }
  const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) {
    warn("normalize: constant image, returning zeros");
    if (degenerate) *degenerate = true;
    return out;
  }
  const double scale = 1.0 / (mx - mn);
  for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = (img.data[i] - mn) * scale;
  // Pin the extremes so min 0 and max 1 are attained exactly.
  out.data[static_cast<std::size_t>(lo - img.data.begin())] = 0.0;
  out.data[static_cast<std::size_t>(hi - img.data.begin())] = 1.0;
  if (degenerate) *degenerate = false;
  return out;
}

double sample_poisson(double mean, RngSeed seed, std::uint64_t stream) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw std::invalid_argument("sample_poisson: mean must be finite and >= 0");
  }
  if (mean == 0.0) return 0.0;
  if (mean < 30.0) {
    const double u = uniform01(seed.value, stream, 0);
    double p = std::exp(-mean);
    double cdf = p;
    double k = 0.0;
    while (u > cdf && k < 1000.0) {
      k += 1.0;
      p *= mean / k;
      cdf += p;
    }
    return k;
  }
  const double z = standard_normal(seed.value, stream, 0);
  return std::max(0.0, std::round(mean + std::sqrt(mean) * z));
}

namespace {

void check_background(const std::vector<double>& bg, std::size_t n) {
  if (bg.size() > 1 && bg.size() != n) {
    throw std::invalid_argument("background must be a scalar or one value per bin (" +
                                std::to_string(n) + "), got " + std::to_string(bg.size()));
  }
  for (double b : bg) {
    if (!(b >= 0.0) || !std::isfinite(b)) throw std::invalid_argument("background must be >= 0");
  }
}

}  // namespace

CountsSinogram sample_counts(const Sinogram& p, double intensity,
                             const std::vector<double>& background, RngSeed seed) {
  if (!(intensity >= 0.0) || !std::isfinite(intensity)) {
    throw std::invalid_argument("intensity must be finite and >= 0");
  }
  require_finite(p.data, "sample_counts line integrals");
  check_background(background, p.size());
  CountsSinogram c;
  c.angles = p.angles;
  c.bins = p.bins;
  c.intensity = intensity;
  c.background = background;
  c.counts.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double mean = intensity * std::exp(-p.data[i]) + c.background_at(i);
    c.counts[i] = sample_poisson(mean, seed, i);
  }
  return c;
}

CountsSinogram simulate_counts(const Image& img, const FanBeamGeometry& geom, double intensity,
                               const std::vector<double>& background, RngSeed seed) {
  require_finite(img.data, "simulate_counts image");
  if (!img.data.empty()) {
    const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
    if (*lo < 0.0 || *hi > 1.0) warn("simulate_counts: image values outside [0, 1]; normalize first");
  }
  return sample_counts(project(img, geom), intensity, background, seed);
}

Sinogram counts_to_sinogram(const CountsSinogram& c) {
  if (!(c.intensity > 0.0)) throw std::invalid_argument("counts_to_sinogram: intensity must be > 0");
  if (c.counts.size() != c.angles * c.bins) {
    throw std::invalid_argument("counts_to_sinogram: counts size does not match dims");
  }
  check_background(c.background, c.counts.size());
  Sinogram s(c.angles, c.bins);
  for (std::size_t i = 0; i < c.counts.size(); ++i) {
    const double net = std::max(c.counts[i] - c.background_at(i), kCountFloor);
    s.data[i] = -std::log(net / c.intensity);
  }
  return s;
}

}  // namespace tomoforge

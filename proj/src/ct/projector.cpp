#include "tomoforge/ct/projector.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tomoforge {

void check_image_shape(const Image& img, const FanBeamGeometry& geom, const char* what) {
  if (img.rows != geom.rows || img.cols != geom.cols || img.data.size() != img.rows * img.cols) {
    throw std::invalid_argument(std::string(what) + ": image is " + std::to_string(img.rows) + "x" +
                                std::to_string(img.cols) + ", geometry expects " +
                                std::to_string(geom.rows) + "x" + std::to_string(geom.cols));
  }
}

void check_sinogram_shape(const Sinogram& sino, const FanBeamGeometry& geom, const char* what) {
  if (sino.angles != geom.num_angles || sino.bins != geom.num_bins ||
      sino.data.size() != sino.angles * sino.bins) {
    throw std::invalid_argument(std::string(what) + ": sinogram is " + std::to_string(sino.angles) +
                                "x" + std::to_string(sino.bins) + ", geometry expects " +
                                std::to_string(geom.num_angles) + "x" +
                                std::to_string(geom.num_bins));
  }
}

namespace {

// Minor-axis positions are tracked in 32.32 fixed point. Floor and fraction
// then come from shifts and masks, and the position of step i is an exact
// integer expression, so forward and transpose walks see identical weights.
constexpr int kFracBits = 32;
constexpr double kFixedOne = 4294967296.0;  // 2^32

// One ray, marched along its dominant image axis. At step i of [lo, hi) the
// ray crosses the minor axis at fixed-point index base + slope * i; the two
// neighbouring pixels share weight w by linear interpolation.
struct Ray {
  bool column_major;  // marching over columns (|dx| >= |dy|)
  std::int64_t base;
  std::int64_t slope;
  double w;
  std::ptrdiff_t lo;
  std::ptrdiff_t hi;
};

Ray setup_ray(const FanBeamGeometry& g, double sx, double sy, double px, double py) {
  const double ps = g.pixel_size;
  const double rc = 0.5 * static_cast<double>(g.rows - 1);
  const double cc = 0.5 * static_cast<double>(g.cols - 1);
  const double dx = px - sx, dy = py - sy;
  const double len = std::sqrt(dx * dx + dy * dy);
  Ray ray{};
  double base, slope, major_size, minor_size;
  if (std::abs(dx) >= std::abs(dy)) {
    // y(c) = sy + ((c - cc) ps - sx) dy/dx ; row = rc - y / ps
    const double t = dy / dx;
    ray.column_major = true;
    slope = -t;
    base = rc - (sy + (-cc * ps - sx) * t) / ps;
    ray.w = ps * len / std::abs(dx);
    major_size = static_cast<double>(g.cols);
    minor_size = static_cast<double>(g.rows);
  } else {
    // x(r) = sx + ((rc - r) ps - sy) dx/dy ; col = x / ps + cc
    const double t = dx / dy;
    ray.column_major = false;
    slope = -t;
    base = (sx + (rc * ps - sy) * t) / ps + cc;
    ray.w = ps * len / std::abs(dy);
    major_size = static_cast<double>(g.rows);
    minor_size = static_cast<double>(g.cols);
  }
  // |slope| <= 1, so a ray whose base is this far out never enters the image.
  if (!(std::abs(base) < major_size + minor_size + 2.0)) return ray;
  ray.base = std::llround(base * kFixedOne);
  ray.slope = std::llround(slope * kFixedOne);
  ray.lo = 0;
  ray.hi = static_cast<std::ptrdiff_t>(major_size);
  // Trim [lo, hi) to steps whose minor index can lie in (-1, minor_size);
  // the exact integer test is repeated per step.
  if (slope != 0.0) {
    double a = (-1.0 - base) / slope;
    double b = (minor_size - base) / slope;
    if (a > b) std::swap(a, b);
    const double lo = std::max(0.0, std::floor(a) - 1.0);
    const double hi = std::min(major_size, std::ceil(b) + 2.0);
    ray.lo = static_cast<std::ptrdiff_t>(std::min(lo, major_size));
    ray.hi = std::max(ray.lo, static_cast<std::ptrdiff_t>(std::max(hi, 0.0)));
  }
  return ray;
}

// Calls visit(pixel_index, weight, tap) for every interpolation tap of `ray`;
// tap is 0 for the lower neighbour and 1 for the upper one.
template <class Visit>
inline void for_each_tap(const Ray& ray, std::ptrdiff_t N, std::ptrdiff_t M, Visit&& visit) {
  const std::ptrdiff_t minor = ray.column_major ? N : M;
  const std::ptrdiff_t major_stride = ray.column_major ? 1 : M;
  const std::ptrdiff_t minor_stride = ray.column_major ? M : 1;
  const std::int64_t lower = -(std::int64_t{1} << kFracBits);
  const std::int64_t upper = static_cast<std::int64_t>(minor) << kFracBits;
  std::int64_t f = ray.base + ray.slope * static_cast<std::int64_t>(ray.lo);
  for (std::ptrdiff_t i = ray.lo; i < ray.hi; ++i, f += ray.slope) {
    if (f <= lower || f >= upper) continue;
    const std::ptrdiff_t i0 = static_cast<std::ptrdiff_t>(f >> kFracBits);
    // Fraction bits placed in the mantissa of a double in [1, 2).
    const std::uint64_t bits = 0x3FF0000000000000ULL |
                               ((static_cast<std::uint64_t>(f) & 0xFFFFFFFFULL) << (52 - kFracBits));
    const double frac = std::bit_cast<double>(bits) - 1.0;
    const std::ptrdiff_t pix = i * major_stride + i0 * minor_stride;
    if (i0 >= 0) visit(pix, ray.w * (1.0 - frac), 0);
    if (i0 + 1 < minor) visit(pix + minor_stride, ray.w * frac, 1);
  }
}

// Calls per_ray(ray_index, ray) for every (angle, bin) in sinogram order.
template <class PerRay>
void walk_rays(const FanBeamGeometry& g, PerRay&& per_ray) {
  for (std::size_t k = 0; k < g.num_angles; ++k) {
    const double t = g.angle(k);
    const double ct = std::cos(t), st = std::sin(t);
    const double sx = g.source_axis_dist * ct, sy = g.source_axis_dist * st;
    for (std::size_t j = 0; j < g.num_bins; ++j) {
      const double u = g.bin_center(j);
      const double px = -g.axis_detector_dist * ct - u * st;
      const double py = -g.axis_detector_dist * st + u * ct;
      per_ray(k * g.num_bins + j, setup_ray(g, sx, sy, px, py));
    }
  }
}

}  // namespace

Sinogram project(const Image& img, const FanBeamGeometry& geom) {
  geom.validate();
  check_image_shape(img, geom, "project");
  Sinogram out(geom.num_angles, geom.num_bins);
  const double* x = img.data.data();
  double* y = out.data.data();
  const auto N = static_cast<std::ptrdiff_t>(geom.rows), M = static_cast<std::ptrdiff_t>(geom.cols);
  walk_rays(geom, [&](std::size_t idx, const Ray& ray) {
    double acc[2] = {0.0, 0.0};
    for_each_tap(ray, N, M, [&](std::ptrdiff_t pix, double w, int tap) { acc[tap] += w * x[pix]; });
    y[idx] = acc[0] + acc[1];
  });
  return out;
}

Image backproject(const Sinogram& sino, const FanBeamGeometry& geom) {
  geom.validate();
  check_sinogram_shape(sino, geom, "backproject");
  Image out(geom.rows, geom.cols);
  const double* y = sino.data.data();
  double* x = out.data.data();
  const auto N = static_cast<std::ptrdiff_t>(geom.rows), M = static_cast<std::ptrdiff_t>(geom.cols);
  walk_rays(geom, [&](std::size_t idx, const Ray& ray) {
    const double v = y[idx];
    if (v == 0.0) return;
    for_each_tap(ray, N, M, [&](std::ptrdiff_t pix, double w, int) { x[pix] += w * v; });
  });
  return out;
}

}  // namespace tomoforge

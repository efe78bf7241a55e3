#include "tomoforge/io/phantom.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tomoforge/ct/simulator.hpp"

namespace tomoforge {

EllipsePhantomSpec shepp_logan_ellipses() {
  constexpr double deg = std::numbers::pi / 180.0;
  return {
      {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
      {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8},
      {0.22, 0.0, 0.11, 0.31, -18.0 * deg, -0.2},
      {-0.22, 0.0, 0.16, 0.41, 18.0 * deg, -0.2},
      {0.0, 0.35, 0.21, 0.25, 0.0, 0.1},
      {0.0, 0.1, 0.046, 0.046, 0.0, 0.1},
      {0.0, -0.1, 0.046, 0.046, 0.0, 0.1},
      {-0.08, -0.605, 0.046, 0.023, 0.0, 0.1},
      {0.0, -0.606, 0.023, 0.023, 0.0, 0.1},
      {0.06, -0.605, 0.023, 0.046, 0.0, 0.1},
  };
}

Image rasterize(const EllipsePhantomSpec& spec, std::size_t n) {
  for (const auto& e : spec) {
    if (!std::isfinite(e.center_x) || !std::isfinite(e.center_y) || !std::isfinite(e.rotation) ||
        !std::isfinite(e.intensity) || !(e.semi_axis_x > 0.0) || !(e.semi_axis_y > 0.0)) {
      throw std::invalid_argument("rasterize: ellipse parameters must be finite with positive axes");
    }
  }
  // Each pixel averages a kSub x kSub grid of point samples, which keeps
  // ellipse edges from aliasing.
  constexpr int kSub = 4;
  Image img(n, n);
  const double step = 2.0 / static_cast<double>(n);
  const double sub = step / kSub;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int i = 0; i < kSub; ++i) {
        const double y = 1.0 - static_cast<double>(r) * step - (i + 0.5) * sub;
        for (int k = 0; k < kSub; ++k) {
          const double x = static_cast<double>(c) * step + (k + 0.5) * sub - 1.0;
          for (const auto& e : spec) {
            const double cr = std::cos(e.rotation), sr = std::sin(e.rotation);
            const double dx = x - e.center_x, dy = y - e.center_y;
            const double u = (dx * cr + dy * sr) / e.semi_axis_x;
            const double w = (-dx * sr + dy * cr) / e.semi_axis_y;
            if (u * u + w * w <= 1.0) acc += e.intensity;
          }
        }
      }
      // Overlapping intensities such as 1 - 0.8 - 0.2 leave rounding residue;
      // snap it so regions meant to be empty are exactly zero.
      const double v = acc / (kSub * kSub);
      img.at(r, c) = std::abs(v) < 1e-12 ? 0.0 : v;
    }
  }
  return img;
}

Image shepp_logan(std::size_t n) {
  if (n < 16) throw std::invalid_argument("shepp_logan: size must be >= 16");
  return normalize(rasterize(shepp_logan_ellipses(), n));
}

Image make_phantom(const std::string& name, std::size_t n) {
  if (name == "shepp-logan") return shepp_logan(n);
  if (name == "disks") {
    if (n < 16) throw std::invalid_argument("disks phantom: size must be >= 16");
    return normalize(rasterize({{0.0, 0.0, 0.8, 0.8, 0.0, 1.0}, {0.3, 0.2, 0.2, 0.2, 0.0, -0.5}}, n));
  }
  throw std::invalid_argument("unknown phantom '" + name + "' (expected shepp-logan or disks)");
}

}  // namespace tomoforge

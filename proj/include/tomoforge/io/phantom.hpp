#pragma once

#include <string>
#include <vector>

#include "tomoforge/ct/image.hpp"

namespace tomoforge {

/// Ellipse on the [-1, 1]^2 square; `intensity` is added inside it.
struct Ellipse {
  double center_x = 0.0;
  double center_y = 0.0;
  double semi_axis_x = 0.0;
  double semi_axis_y = 0.0;
  double rotation = 0.0;  // radians, counter-clockwise
  double intensity = 0.0;
};

using EllipsePhantomSpec = std::vector<Ellipse>;

/// The ten-ellipse head phantom with the higher-contrast (modified) intensities.
EllipsePhantomSpec shepp_logan_ellipses();

/// Sum of ellipse indicators on an n x n grid spanning [-1, 1]^2 (row 0 at
/// y = +1), each pixel the mean of 4 x 4 sub-samples. No normalization.
Image rasterize(const EllipsePhantomSpec& spec, std::size_t n);

/// n x n Shepp-Logan raster normalized to [0, 1]. Requires n >= 16.
Image shepp_logan(std::size_t n);

/// Looks up a built-in phantom by name ("shepp-logan", "disks").
Image make_phantom(const std::string& name, std::size_t n);

}  // namespace tomoforge

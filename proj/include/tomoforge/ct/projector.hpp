#pragma once

#include "tomoforge/ct/geometry.hpp"
#include "tomoforge/ct/image.hpp"

namespace tomoforge {

/// Joseph ray-driven forward projection: each detector bin receives the line
/// integral of the bilinear-in-one-axis image along the source-to-bin ray.
Sinogram project(const Image& img, const FanBeamGeometry& geom);

/// Exact transpose of project(): <project(x), y> == <x, backproject(y)>.
Image backproject(const Sinogram& sino, const FanBeamGeometry& geom);

/// Throw std::invalid_argument when shapes disagree with the geometry.
void check_image_shape(const Image& img, const FanBeamGeometry& geom, const char* what);
void check_sinogram_shape(const Sinogram& sino, const FanBeamGeometry& geom, const char* what);

}  // namespace tomoforge

#pragma once

// Forward differences with the last column (row) difference taken as zero:
//   dx(r, c) = x(r, c+1) - x(r, c)  for c < M-1
//   dy(r, c) = x(r+1, c) - x(r, c)  for r < N-1

#include "tomoforge/ct/image.hpp"

namespace tomoforge {

struct ImageGradient {
  Image dx;
  Image dy;
};

ImageGradient gradient(const Image& x);

/// Transpose of gradient(): <gradient(x), g> == <x, gradient_adjoint(g)>.
Image gradient_adjoint(const ImageGradient& g);

/// Sum of |dx| + |dy| (anisotropic, unnormalized).
double anisotropic_tv_sum(const Image& x);

}  // namespace tomoforge

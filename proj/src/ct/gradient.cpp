#include "tomoforge/ct/gradient.hpp"

#include <cmath>
#include <stdexcept>

namespace tomoforge {

ImageGradient gradient(const Image& x) {
  const std::size_t N = x.rows, M = x.cols;
  ImageGradient g{Image(N, M), Image(N, M)};
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t c = 0; c < M; ++c) {
      if (c + 1 < M) g.dx.at(r, c) = x.at(r, c + 1) - x.at(r, c);
      if (r + 1 < N) g.dy.at(r, c) = x.at(r + 1, c) - x.at(r, c);
    }
  }
  return g;
}

Image gradient_adjoint(const ImageGradient& g) {
  const std::size_t N = g.dx.rows, M = g.dx.cols;
  if (g.dy.rows != N || g.dy.cols != M) throw std::invalid_argument("gradient_adjoint: shape mismatch");
  Image out(N, M);
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t c = 0; c < M; ++c) {
      double v = 0.0;
      if (c + 1 < M) v -= g.dx.at(r, c);
      if (c > 0) v += g.dx.at(r, c - 1);
      if (r + 1 < N) v -= g.dy.at(r, c);
      if (r > 0) v += g.dy.at(r - 1, c);
      out.at(r, c) = v;
    }
  }
  return out;
}

double anisotropic_tv_sum(const Image& x) {
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c + 1 < x.cols; ++c) s += std::abs(x.at(r, c + 1) - x.at(r, c));
  }
  for (std::size_t r = 0; r + 1 < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) s += std::abs(x.at(r + 1, c) - x.at(r, c));
  }
  return s;
}

}  // namespace tomoforge

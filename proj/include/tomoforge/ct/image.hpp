#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomoforge {

/// Row-major N x M image of attenuation values.
struct Image {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t n, std::size_t m, double value = 0.0) : rows(n), cols(m), data(n * m, value) {}

  [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool operator==(const Image&) const = default;
};

/// num_angles x num_bins line integrals, one detector row per angle.
struct Sinogram {
  std::size_t angles = 0;
  std::size_t bins = 0;
  std::vector<double> data;

  Sinogram() = default;
  Sinogram(std::size_t a, std::size_t b, double value = 0.0) : angles(a), bins(b), data(a * b, value) {}

  [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
  double& at(std::size_t a, std::size_t b) { return data[a * bins + b]; }
  [[nodiscard]] double at(std::size_t a, std::size_t b) const { return data[a * bins + b]; }
  [[nodiscard]] std::span<const double> row(std::size_t a) const { return {data.data() + a * bins, bins}; }
  bool operator==(const Sinogram&) const = default;
};

/// Throws std::invalid_argument naming `what` if any entry is NaN or Inf.
void require_finite(std::span<const double> v, const std::string& what);

}  // namespace tomoforge

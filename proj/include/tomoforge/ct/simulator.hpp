#pragma once

#include <cstdint>
#include <vector>

#include "tomoforge/ct/geometry.hpp"
#include "tomoforge/ct/image.hpp"
#include "tomoforge/random.hpp"

namespace tomoforge {

/// Photon counts before the log transform.
struct CountsSinogram {
  std::size_t angles = 0;
  std::size_t bins = 0;
  std::vector<double> counts;
  double intensity = 0.0;          // photons per ray, I
  std::vector<double> background;  // empty (= 0), one value, or one per bin

  [[nodiscard]] double background_at(std::size_t i) const noexcept {
    if (background.empty()) return 0.0;
    return background.size() == 1 ? background[0] : background[i];
  }
};

inline constexpr double kCountFloor = 0.1;
inline constexpr double kIntensityPresets[] = {1e3, 1e4, 5e4};

/// (x - min) / (max - min). A constant image yields zeros and a warning; when
/// `degenerate` is given it reports that case.
Image normalize(const Image& img, bool* degenerate = nullptr);

/// One Poisson draw with the given mean: inversion below 30, rounded normal
/// approximation (clamped at 0) from 30 up. `stream` selects the bin.
double sample_poisson(double mean, RngSeed seed, std::uint64_t stream);

/// Counts with mean I * exp(-p_i) + background_i for precomputed line
/// integrals p. Bin i uses random stream i, so results do not depend on
/// evaluation order.
CountsSinogram sample_counts(const Sinogram& line_integrals, double intensity,
                             const std::vector<double>& background, RngSeed seed);

/// project() followed by sample_counts(). Warns when img leaves [0, 1].
CountsSinogram simulate_counts(const Image& img, const FanBeamGeometry& geom, double intensity,
                               const std::vector<double>& background, RngSeed seed);

/// -ln(max(counts - background, kCountFloor) / I). Requires I > 0.
Sinogram counts_to_sinogram(const CountsSinogram& c);

}  // namespace tomoforge

#pragma once

#include <string>
#include <vector>

#include "tomoforge/ct/geometry.hpp"
#include "tomoforge/ct/image.hpp"

namespace tomoforge {

enum class FilterWindow { hann, ramp };

struct FilterSpec {
  FilterWindow window = FilterWindow::hann;
  double frequency_scaling = 0.8;  // fraction of Nyquist, (0, 1]

  void validate() const;
};

std::string to_string(FilterWindow w);
FilterWindow filter_window_from_string(const std::string& name);

/// Zero-padded row length used for filtering: smallest power of two >= 2 * num_bins.
std::size_t filter_length(std::size_t num_bins);

/// Frequency response on the DFT grid of length filter_length(num_bins), in
/// units of normalized frequency (1 = Nyquist): nu * window(nu), zero above
/// frequency_scaling. Entry k and entry (P - k) % P are identical.
std::vector<double> build_filter(std::size_t num_bins, const FilterSpec& spec);

/// Direct fan-beam FBP: cosine pre-weighting, FFT row filtering, and
/// pixel-driven backprojection with 1/U^2 distance weighting and linear
/// interpolation on the detector.
Image fbp_reconstruct(const Sinogram& sino, const FanBeamGeometry& geom, const FilterSpec& spec);

}  // namespace tomoforge

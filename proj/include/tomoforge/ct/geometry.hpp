#pragma once

// Flat-detector fan-beam acquisition.
//
// Source at SAD * (cos t, sin t), detector centre at -ADD * (cos t, sin t),
// detector axis e = (-sin t, cos t), bin j centred at u_j = (j - (B-1)/2) * du.
// Angles t_k = k * angle_range / num_angles. Pixel (r, c) is centred at
// x = (c - (M-1)/2) * ps, y = ((N-1)/2 - r) * ps, so row 0 is the top.

#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

namespace tomoforge {

/// Pixel pitch of the default scans. Phantoms are normalized to [0, 1] per mm,
/// so this sets the attenuation scale: at 0.3 mm a 128 x 128 Shepp-Logan has
/// line integrals up to about 10. The thickest rays then expect roughly 0.05,
/// 0.5 and 2.5 counts at 1e3, 1e4 and 5e4 photons, so the dose presets differ
/// clearly.
inline constexpr double kDefaultPixelSize = 0.3;

struct FanBeamGeometry {
  std::size_t num_angles = 360;
  std::size_t num_bins = 0;
  double source_axis_dist = 500.0;    // mm
  double axis_detector_dist = 500.0;  // mm
  std::size_t rows = 128;             // image_size[0]
  std::size_t cols = 128;             // image_size[1]
  double pixel_size = kDefaultPixelSize;  // mm
  double detector_width = 0.0;        // mm
  double angle_range = 2.0 * std::numbers::pi;  // radians

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  [[nodiscard]] double bin_spacing() const noexcept { return detector_width / static_cast<double>(num_bins); }
  [[nodiscard]] double bin_center(std::size_t j) const noexcept {
    return (static_cast<double>(j) - 0.5 * static_cast<double>(num_bins - 1)) * bin_spacing();
  }
  [[nodiscard]] double angle(std::size_t k) const noexcept {
    return static_cast<double>(k) * angle_range / static_cast<double>(num_angles);
  }
  /// Half of the image diagonal in mm.
  [[nodiscard]] double half_diagonal() const noexcept;
  /// Radius of the largest centred disk seen by every ray fan.
  [[nodiscard]] double covered_radius() const noexcept;

  bool operator==(const FanBeamGeometry&) const = default;
};

/// Default scan for an N x M image: full rotation, 500/500 mm distances and a
/// detector sized to cover the image diagonal plus 10%. Zero `num_bins` picks
/// ceil(2.2 * diagonal in pixels), i.e. a bin pitch of half a pixel at the
/// rotation axis.
FanBeamGeometry make_geometry(std::size_t rows, std::size_t cols, std::size_t num_angles,
                              std::size_t num_bins = 0, double pixel_size = kDefaultPixelSize,
                              double source_axis_dist = 500.0, double axis_detector_dist = 500.0);

/// Detector width whose fan covers a centred disk of radius `radius`.
double detector_width_for_radius(double radius, double source_axis_dist, double axis_detector_dist);

nlohmann::json to_json(const FanBeamGeometry& g);
/// Strict parse: every field required, unknown keys rejected.
FanBeamGeometry geometry_from_json(const nlohmann::json& j);

}  // namespace tomoforge

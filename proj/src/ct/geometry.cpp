#include "tomoforge/ct/geometry.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tomoforge/ct/image.hpp"

namespace tomoforge {

void require_finite(std::span<const double> v, const std::string& what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw std::invalid_argument(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

double FanBeamGeometry::half_diagonal() const noexcept {
  const double n = static_cast<double>(rows);
  const double m = static_cast<double>(cols);
  return 0.5 * pixel_size * std::sqrt(n * n + m * m);
}

double FanBeamGeometry::covered_radius() const noexcept {
  const double half_fan = std::atan(0.5 * detector_width / (source_axis_dist + axis_detector_dist));
  return source_axis_dist * std::sin(half_fan);
}

void FanBeamGeometry::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("geometry: " + msg); };
  if (num_angles < 1) fail("num_angles must be >= 1");
  if (num_bins < 1) fail("num_bins must be >= 1");
  if (rows < 1 || cols < 1) fail("image_size must be positive");
  if (!(source_axis_dist > 0.0) || !(axis_detector_dist > 0.0) || !(detector_width > 0.0)) {
    fail("distances and detector_width must be > 0");
  }
  if (!(pixel_size > 0.0)) fail("pixel_size must be > 0");
  if (!(angle_range > 0.0) || !std::isfinite(angle_range)) fail("angle_range must be finite and > 0");
  const double r = half_diagonal();
  if (source_axis_dist <= r || axis_detector_dist <= r) {
    fail("source and detector must lie outside the image (half diagonal " + std::to_string(r) +
         " mm)");
  }
  if (r > covered_radius() * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "image half diagonal " << r << " mm exceeds the radius covered by the detector ("
       << covered_radius() << " mm); widen detector_width";
    fail(os.str());
  }
}

double detector_width_for_radius(double radius, double sad, double add) {
  // sin(gamma) = radius / sad, detector half width = (sad + add) * tan(gamma)
  return 2.0 * (sad + add) * radius / std::sqrt(sad * sad - radius * radius);
}

FanBeamGeometry make_geometry(std::size_t rows, std::size_t cols, std::size_t num_angles,
                              std::size_t num_bins, double pixel_size, double sad, double add) {
  FanBeamGeometry g;
  g.rows = rows;
  g.cols = cols;
  g.num_angles = num_angles;
  g.pixel_size = pixel_size;
  g.source_axis_dist = sad;
  g.axis_detector_dist = add;
  const double diag_px = std::sqrt(static_cast<double>(rows * rows + cols * cols));
  g.num_bins = num_bins != 0 ? num_bins : static_cast<std::size_t>(std::ceil(2.2 * diag_px));
  const double radius = 1.1 * g.half_diagonal();
  if (radius >= sad) throw std::invalid_argument("geometry: image too large for source distance");
  g.detector_width = detector_width_for_radius(radius, sad, add);
  g.validate();
  return g;
}

nlohmann::json to_json(const FanBeamGeometry& g) {
  return nlohmann::json{{"num_angles", g.num_angles},
                        {"num_bins", g.num_bins},
                        {"source_axis_dist", g.source_axis_dist},
                        {"axis_detector_dist", g.axis_detector_dist},
                        {"image_size", {g.rows, g.cols}},
                        {"pixel_size", g.pixel_size},
                        {"detector_width", g.detector_width},
                        {"angle_range", g.angle_range}};
}

FanBeamGeometry geometry_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys{"num_angles",     "num_bins",   "source_axis_dist",
                                          "axis_detector_dist", "image_size", "pixel_size",
                                          "detector_width", "angle_range"};
  if (!j.is_object()) throw std::invalid_argument("geometry: expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.contains(k)) throw std::invalid_argument("geometry: unknown key '" + k + "'");
  }
  for (const auto& k : keys) {
    if (!j.contains(k)) throw std::invalid_argument("geometry: missing key '" + k + "'");
  }
  FanBeamGeometry g;
  try {
    g.num_angles = j.at("num_angles").get<std::size_t>();
    g.num_bins = j.at("num_bins").get<std::size_t>();
    g.source_axis_dist = j.at("source_axis_dist").get<double>();
    g.axis_detector_dist = j.at("axis_detector_dist").get<double>();
    const auto& size = j.at("image_size");
    if (!size.is_array() || size.size() != 2) {
      throw std::invalid_argument("geometry: image_size must be [rows, cols]");
    }
    g.rows = size[0].get<std::size_t>();
    g.cols = size[1].get<std::size_t>();
    g.pixel_size = j.at("pixel_size").get<double>();
    g.detector_width = j.at("detector_width").get<double>();
    g.angle_range = j.at("angle_range").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("geometry: ") + e.what());
  }
  g.validate();
  return g;
}

}  // namespace tomoforge

#pragma once

// Raw little-endian float32 arrays with a JSON sidecar at "<path>.json":
//   {"dims": [N, M], "dtype": "f32le", "min": .., "max": .., "description": ..}
// plus any extra fields the writer supplies. Binary PGM (P5) at 8 or 16 bits.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tomoforge/ct/image.hpp"

namespace tomoforge {

/// Raised for unreadable or inconsistent files; the message carries the path
/// and, where meaningful, the byte offset.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RawArray {
  std::vector<std::size_t> dims;
  std::vector<double> data;
  nlohmann::json sidecar;
};

std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Writes values as f32le and the sidecar. `extra` fields are merged into the
/// sidecar object (the standard keys take precedence).
void write_raw(const std::filesystem::path& path, std::span<const double> values,
               const std::vector<std::size_t>& dims, const std::string& description,
               const nlohmann::json& extra = nlohmann::json::object());
RawArray read_raw(const std::filesystem::path& path);

void write_raw_image(const std::filesystem::path& path, const Image& img,
                     const std::string& description, const nlohmann::json& extra = nlohmann::json::object());
Image read_raw_image(const std::filesystem::path& path);

/// Linear map [lo, hi] -> [0, 2^bits - 1] with clamping and rounding.
void write_pgm(const std::filesystem::path& path, const Image& img, int bits = 16, double lo = 0.0,
               double hi = 1.0);
/// Returns sample / maxval, i.e. values in [0, 1].
Image read_pgm(const std::filesystem::path& path);

/// Dispatch on extension: ".pgm" uses PGM, anything else raw float.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img,
                 const std::string& description = "image");

}  // namespace tomoforge

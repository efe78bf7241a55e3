#pragma once
// Run configuration shared by the subcommands. Precedence, lowest first:
// built-in defaults, the JSON file given with --config, command-line flags.
//
// JSON layout (every block and key optional, unknown keys rejected):
//   {
//     "geometry":  {"num_angles", "num_bins", "pixel_size", "source_axis_dist",
//                   "axis_detector_dist", "detector_width", "angle_range"},
//     "simulator": {"phantom", "size", "intensity", "seed", "background"},
//     "fbp":       {"window", "frequency_scale"},
//     "tv":        {"lambda", "iterations", "step_ratio", "lambda_grid"},
//     "recon":     {"iterations", "lr", "seed", "checkpoint_mode", "curve_stride",
//                   "optimizer", "weight_decay", "depth", "channels"},
//     "benchmark": {"phantoms", "intensities", "methods"},
//     "io":        {"out", "sinogram", "ground_truth", "recon", "csv"}
//   }

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tomoforge/ct/fbp.hpp"
#include "tomoforge/ct/geometry.hpp"
#include "tomoforge/ct/tv.hpp"
#include "tomoforge/recon/reconstructor.hpp"

namespace tomoforge::cli {

/// Invalid configuration; the message starts with the JSON path of the
/// offending value, e.g. "/recon/lr: must be > 0".
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GeometryBlock {
  std::optional<std::size_t> num_angles;
  std::optional<std::size_t> num_bins;
  std::optional<double> pixel_size;
  std::optional<double> source_axis_dist;
  std::optional<double> axis_detector_dist;
  std::optional<double> detector_width;
  std::optional<double> angle_range;

  /// Scan geometry for an n x n image: defaults from make_geometry, then the
  /// fields set here.
  [[nodiscard]] FanBeamGeometry resolve(std::size_t n) const;
};

struct SimulatorBlock {
  std::string phantom = "shepp-logan";
  std::size_t size = 128;
  std::optional<double> intensity;
  std::uint64_t seed = 0;
  std::vector<double> background;  // empty, one value, or one per bin
};

struct TvBlock {
  TvConfig config{};
  /// When non-empty the benchmark runs every value and keeps the best PSNR.
  std::vector<double> lambda_grid;
};

struct ReconBlock {
  ReconConfig config{};
  /// Unset means best_psnr when a ground truth is available, else best_loss.
  std::optional<CheckpointMode> checkpoint_mode;
};

enum class Method { fbp, tv, proposed };
std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct BenchmarkBlock {
  std::vector<std::string> phantoms{"shepp-logan"};
  std::vector<double> intensities{1e3, 1e4, 5e4};
  std::vector<Method> methods{Method::fbp, Method::tv, Method::proposed};
};

struct IoBlock {
  std::optional<std::string> out;
  std::optional<std::string> sinogram;
  std::optional<std::string> ground_truth;
  std::optional<std::string> recon;
  std::optional<std::string> csv;
};

struct RunConfig {
  GeometryBlock geometry;
  SimulatorBlock simulator;
  FilterSpec fbp{};
  TvBlock tv;
  ReconBlock recon;
  BenchmarkBlock benchmark;
  IoBlock io;

  /// Checks every value; throws ConfigError naming the JSON path.
  void validate() const;
};

/// Base configuration of `benchmark`: a desk-scale protocol (64 x 64 image,
/// 180 angles, 10-layer 32-channel network, 500 iterations, five-point TV
/// lambda grid) that finishes in minutes on one core. Config and flags
/// override it like any other default.
RunConfig desk_scale_defaults();

/// Applies the keys present in `j` on top of `base`.
RunConfig parse_config(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
/// Full echo of the effective configuration.
nlohmann::json to_json(const RunConfig& cfg);

/// Worker cap from TOMOFORGE_THREADS, else the hardware concurrency (>= 1).
/// Throws ConfigError on a value that is not a positive integer.
std::size_t worker_limit();

}  // namespace tomoforge::cli

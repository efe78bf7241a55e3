#pragma once

// Per-image unsupervised reconstruction: a convolutional network maps the FBP
// image to a refined image and is trained on that single measurement with
//   L(x) = (1/NM) ||y - A x||_1 + tv_value(x).

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tomoforge/ct/fbp.hpp"
#include "tomoforge/ct/geometry.hpp"
#include "tomoforge/ct/image.hpp"
#include "tomoforge/nn/network.hpp"
#include "tomoforge/nn/optimizer.hpp"

namespace tomoforge {

/// (1/NM) * anisotropic_tv_sum(x). Requires N, M >= 2.
double tv_value(const Image& img);

struct LossValue {
  double total = 0.0;
  double data_term = 0.0;
  double tv_term = 0.0;
  Image gradient;  // d total / d x_hat; sign(0) = 0 for every |.| term
};

LossValue loss(const Sinogram& y, const Image& x_hat, const FanBeamGeometry& geom);

enum class CheckpointMode { best_psnr, best_loss };

std::string to_string(CheckpointMode m);
CheckpointMode checkpoint_mode_from_string(const std::string& name);
std::string to_string(nn::OptimizerKind k);
nn::OptimizerKind optimizer_kind_from_string(const std::string& name);

struct ReconConfig {
  std::size_t iterations = 2000;
  double lr = 1e-3;
  std::uint64_t seed = 0;  // network initialization seed
  CheckpointMode checkpoint_mode = CheckpointMode::best_loss;
  std::size_t curve_stride = 1;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adamw;
  double weight_decay = 1e-2;
  nn::NetworkSpec network{};

  void validate() const;
};

/// One recorded iterate, passed to the progress callback.
struct IterationRecord {
  std::size_t iteration = 0;
  double loss = 0.0;
  double psnr = 0.0;  // NaN without ground truth
  double ssim = 0.0;  // NaN without ground truth
};

struct ReconReport {
  Image final_image;
  Image initial_image;  // FBP(y), the network input
  std::size_t best_iteration = 0;
  std::vector<std::size_t> curve_iterations;
  std::vector<double> loss_curve;
  std::vector<double> psnr_curve;  // empty without ground truth
  std::vector<double> ssim_curve;  // empty without ground truth
  double best_loss = 0.0;          // loss of the selected iterate
  double final_iterate_loss = 0.0;
  double seconds_per_iteration = 0.0;
};

using ProgressCallback = std::function<void(const IterationRecord&)>;

/// Procedure: x0 = FBP(y); for each iteration evaluate x = NN(x0), its loss
/// and gradient, back-propagate, and update the parameters. The iterate
/// evaluated at iteration i uses the parameters after i updates. `net_seed`
/// initializes the network (callers normally pass cfg.seed).
ReconReport reconstruct(const Sinogram& y, const FanBeamGeometry& geom, const FilterSpec& fbp_spec,
                        std::uint64_t net_seed, const ReconConfig& cfg,
                        const std::optional<Image>& ground_truth = std::nullopt,
                        const ProgressCallback& progress = {});

}  // namespace tomoforge

#include "tomoforge/recon/reconstructor.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tomoforge/ct/gradient.hpp"
#include "tomoforge/ct/projector.hpp"
#include "tomoforge/metrics.hpp"

namespace tomoforge {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double tv_value(const Image& img) {
  if (img.rows < 2 || img.cols < 2) {
    throw std::invalid_argument("tv_value: image must be at least 2x2, got " +
                                std::to_string(img.rows) + "x" + std::to_string(img.cols));
  }
  return anisotropic_tv_sum(img) / static_cast<double>(img.rows * img.cols);
}

LossValue loss(const Sinogram& y, const Image& x_hat, const FanBeamGeometry& geom) {
  check_sinogram_shape(y, geom, "loss");
  check_image_shape(x_hat, geom, "loss");
  require_finite(x_hat.data, "loss image");
  const double inv_nm = 1.0 / static_cast<double>(x_hat.rows * x_hat.cols);
  const Sinogram ax = project(x_hat, geom);
  Sinogram s(y.angles, y.bins);
  double l1 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = ax.data[i] - y.data[i];
    l1 += std::abs(r);
    s.data[i] = sign(r);
  }
  LossValue out;
  out.data_term = l1 * inv_nm;
  out.tv_term = tv_value(x_hat);
  out.total = out.data_term + out.tv_term;

  out.gradient = backproject(s, geom);
  ImageGradient g = gradient(x_hat);
  for (double& v : g.dx.data) v = sign(v);
  for (double& v : g.dy.data) v = sign(v);
  const Image tv_grad = gradient_adjoint(g);
  for (std::size_t i = 0; i < x_hat.size(); ++i) {
    out.gradient.data[i] = inv_nm * (out.gradient.data[i] + tv_grad.data[i]);
  }
  return out;
}

std::string to_string(CheckpointMode m) {
  return m == CheckpointMode::best_psnr ? "best_psnr" : "best_loss";
}

CheckpointMode checkpoint_mode_from_string(const std::string& name) {
  if (name == "best_psnr") return CheckpointMode::best_psnr;
  if (name == "best_loss") return CheckpointMode::best_loss;
  throw std::invalid_argument("unknown checkpoint mode '" + name + "' (expected best_psnr or best_loss)");
}

std::string to_string(nn::OptimizerKind k) { return k == nn::OptimizerKind::adamw ? "adamw" : "sgd"; }

nn::OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adamw") return nn::OptimizerKind::adamw;
  if (name == "sgd") return nn::OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected adamw or sgd)");
}

void ReconConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("recon: lr must be > 0");
  if (curve_stride == 0) throw std::invalid_argument("recon: curve_stride must be >= 1");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("recon: weight_decay must be >= 0");
  network.validate();
  if (network.in_channels != 1 || network.out_channels != 1) {
    throw std::invalid_argument("recon: network must map one channel to one channel");
  }
}

namespace {

nn::Tensor4<float> to_tensor(const Image& img) {
  nn::Tensor4<float> t(nn::Shape4{1, 1, img.rows, img.cols});
  for (std::size_t i = 0; i < img.size(); ++i) t[i] = static_cast<float>(img.data[i]);
  return t;
}

Image to_image(const nn::Tensor4<float>& t) {
  Image img(t.shape().height, t.shape().width);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<double>(t[i]);
  return img;
}

}  // namespace

ReconReport reconstruct(const Sinogram& y, const FanBeamGeometry& geom, const FilterSpec& fbp_spec,
                        std::uint64_t net_seed, const ReconConfig& cfg,
                        const std::optional<Image>& ground_truth, const ProgressCallback& progress) {
  cfg.validate();
  geom.validate();
  check_sinogram_shape(y, geom, "reconstruct");
  require_finite(y.data, "reconstruct sinogram");
  if (cfg.checkpoint_mode == CheckpointMode::best_psnr && !ground_truth) {
    throw std::invalid_argument("reconstruct: best_psnr checkpointing needs a ground-truth image");
  }
  if (ground_truth) check_image_shape(*ground_truth, geom, "reconstruct ground truth");

  ReconReport rep;
  rep.initial_image = fbp_reconstruct(y, geom, fbp_spec);
  nn::Network<float> net(cfg.network, net_seed);
  const nn::Var<float> input = nn::make_var(to_tensor(rep.initial_image), false, "fbp input");

  if (cfg.iterations == 0) {
    rep.final_image = to_image(net.infer(input->value));
    rep.best_loss = rep.final_iterate_loss = loss(y, rep.final_image, geom).total;
    return rep;
  }

  nn::AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  nn::Optimizer<float> opt(net.parameters(), cfg.optimizer, opt_cfg);

  double best_score = std::numeric_limits<double>::infinity();  // lower is better
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    nn::Tape<float> tape;
    const nn::Var<float> out = net.forward(tape, input);
    const Image x_hat = to_image(out->value);
    const LossValue lv = loss(y, x_hat, geom);
    rep.final_iterate_loss = lv.total;

    const bool record = it % cfg.curve_stride == 0;
    IterationRecord rec{it, lv.total, std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN()};
    if (record) {
      rep.curve_iterations.push_back(it);
      rep.loss_curve.push_back(lv.total);
      if (ground_truth) {
        rec.psnr = psnr(x_hat, *ground_truth);
        rec.ssim = ssim(x_hat, *ground_truth);
        rep.psnr_curve.push_back(rec.psnr);
        rep.ssim_curve.push_back(rec.ssim);
      }
    }
    // Loss selection looks at every iterate, PSNR selection at recorded ones.
    double score = std::numeric_limits<double>::infinity();
    if (cfg.checkpoint_mode == CheckpointMode::best_loss) {
      score = lv.total;
    } else if (record) {
      score = -rec.psnr;
    }
    if (score < best_score) {
      best_score = score;
      rep.best_iteration = it;
      rep.best_loss = lv.total;
      rep.final_image = x_hat;
    }
    if (record && progress) progress(rec);

    nn::Tensor4<float> seed(out->value.shape());
    for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = static_cast<float>(lv.gradient.data[i]);
    net.zero_grad();
    tape.backward(out, seed);
    net.check_parameters();
    opt.step();
  }
  const auto t1 = std::chrono::steady_clock::now();
  rep.seconds_per_iteration =
      std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(cfg.iterations);
  return rep;
}

}  // namespace tomoforge

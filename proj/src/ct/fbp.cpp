#include "tomoforge/ct/fbp.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "tomoforge/ct/projector.hpp"

namespace tomoforge {

void FilterSpec::validate() const {
  if (!(frequency_scaling > 0.0 && frequency_scaling <= 1.0)) {
    throw std::invalid_argument("filter frequency_scaling must lie in (0, 1]");
  }
}

std::string to_string(FilterWindow w) { return w == FilterWindow::hann ? "hann" : "ramp"; }

FilterWindow filter_window_from_string(const std::string& name) {
  if (name == "hann") return FilterWindow::hann;
  if (name == "ramp") return FilterWindow::ramp;
  throw std::invalid_argument("unknown filter window '" + name + "' (expected hann or ramp)");
}

std::size_t filter_length(std::size_t num_bins) {
  std::size_t p = 1;
  while (p < 2 * num_bins) p <<= 1;
  return p;
}

std::vector<double> build_filter(std::size_t num_bins, const FilterSpec& spec) {
  if (num_bins < 2) throw std::invalid_argument("build_filter: num_bins must be >= 2");
  spec.validate();
  const std::size_t P = filter_length(num_bins);
  std::vector<double> h(P, 0.0);
  const double s = spec.frequency_scaling;
  for (std::size_t k = 0; k < P; ++k) {
    const std::size_t m = std::min(k, P - k);
    const double nu = static_cast<double>(m) / (0.5 * static_cast<double>(P));
    if (nu > s) continue;
    double w = 1.0;
    if (spec.window == FilterWindow::hann) {
      const double c = std::cos(std::numbers::pi * nu / (2.0 * s));
      w = c * c;
    }
    h[k] = nu * w;
  }
  return h;
}

namespace {

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Filters every row in place: rows[k*B .. k*B+B) <- IDFT(DFT(pad(row)) * H) / P.
void filter_rows(std::vector<double>& rows, std::size_t angles, std::size_t bins,
                 const std::vector<double>& response) {
  const std::size_t P = response.size();
  const std::size_t F = P / 2 + 1;
  std::unique_ptr<double, FftwFree> buf(static_cast<double*>(fftw_malloc(sizeof(double) * P)));
  std::unique_ptr<fftw_complex, FftwFree> spec(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * F)));
  if (!buf || !spec) throw std::bad_alloc();
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(planner_mutex());
    const int n = static_cast<int>(P);
    fwd = fftw_plan_dft_r2c_1d(n, buf.get(), spec.get(), FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(n, spec.get(), buf.get(), FFTW_ESTIMATE);
  }
  const double inv_p = 1.0 / static_cast<double>(P);
  for (std::size_t a = 0; a < angles; ++a) {
    double* row = rows.data() + a * bins;
    std::fill(buf.get(), buf.get() + P, 0.0);
    std::copy(row, row + bins, buf.get());
    fftw_execute(fwd);
    for (std::size_t k = 0; k < F; ++k) {
      spec.get()[k][0] *= response[k];
      spec.get()[k][1] *= response[k];
    }
    fftw_execute(inv);
    for (std::size_t j = 0; j < bins; ++j) row[j] = buf.get()[j] * inv_p;
  }
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
}

}  // namespace

Image fbp_reconstruct(const Sinogram& sino, const FanBeamGeometry& geom, const FilterSpec& spec) {
  geom.validate();
  spec.validate();
  check_sinogram_shape(sino, geom, "fbp_reconstruct");
  require_finite(sino.data, "fbp_reconstruct sinogram");
  const std::size_t A = geom.num_angles, B = geom.num_bins;
  const double D = geom.source_axis_dist;
  const double mag = D / (D + geom.axis_detector_dist);
  const double a = geom.bin_spacing() * mag;  // bin spacing on the virtual detector through the axis
  const double bc = 0.5 * static_cast<double>(B - 1);

  // Cosine pre-weighting.
  std::vector<double> q(sino.data);
  for (std::size_t j = 0; j < B; ++j) {
    const double s = geom.bin_center(j) * mag;
    const double w = D / std::sqrt(D * D + s * s);
    for (std::size_t k = 0; k < A; ++k) q[k * B + j] *= w;
  }

  Image out(geom.rows, geom.cols);
  if (B < 2) return out;  // a single bin carries no filterable signal
  // |f| = nu / (2a) with nu the normalized frequency.
  std::vector<double> response = build_filter(B, spec);
  for (double& r : response) r /= 2.0 * a;
  filter_rows(q, A, B, response);

  const double ps = geom.pixel_size;
  const double rc = 0.5 * static_cast<double>(geom.rows - 1);
  const double cc = 0.5 * static_cast<double>(geom.cols - 1);
  const double dbeta = geom.angle_range / static_cast<double>(A);
  const double scale = 0.5 * dbeta;
  for (std::size_t k = 0; k < A; ++k) {
    const double t = geom.angle(k);
    const double ct = std::cos(t), st = std::sin(t);
    const double* row = q.data() + k * B;
    for (std::size_t r = 0; r < geom.rows; ++r) {
      const double y = (rc - static_cast<double>(r)) * ps;
      double* dst = out.data.data() + r * geom.cols;
      for (std::size_t c = 0; c < geom.cols; ++c) {
        const double x = (static_cast<double>(c) - cc) * ps;
        const double along = D - (x * ct + y * st);
        const double s = D * (-x * st + y * ct) / along;
        const double U = along / D;
        const double fj = s / a + bc;
        if (fj < 0.0 || fj > static_cast<double>(B - 1)) continue;
        const std::size_t j0 = std::min(static_cast<std::size_t>(fj), B - 2);
        const double f = fj - static_cast<double>(j0);
        const double v = (1.0 - f) * row[j0] + f * row[j0 + 1];
        dst[c] += scale * v / (U * U);
      }
    }
  }
  return out;
}

}  // namespace tomoforge

#include "tomoforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomoforge {

namespace {

void check_pair(const Image& a, const Image& b, const char* what) {
  if (a.rows != b.rows || a.cols != b.cols || a.data.size() != b.data.size()) {
    throw std::invalid_argument(std::string(what) + ": image dims differ (" +
                                std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows) + "x" + std::to_string(b.cols) + ")");
  }
  if (a.data.empty()) throw std::invalid_argument(std::string(what) + ": empty image");
  require_finite(a.data, what);
  require_finite(b.data, what);
}

}  // namespace

void SsimConfig::validate() const {
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw std::invalid_argument("ssim: k1 and k2 must be > 0");
  if (window == 0 || window % 2 == 0) throw std::invalid_argument("ssim: window must be odd");
}

double mse(const Image& x_hat, const Image& x) {
  check_pair(x_hat, x, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x_hat.data[i] - x.data[i];
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

double psnr(const Image& x_hat, const Image& x) {
  check_pair(x_hat, x, "psnr");
  const auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
  if (!(*hi > *lo)) throw std::invalid_argument("psnr: constant reference image");
  const double e = mse(x_hat, x);
  if (e == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10((*hi) * (*hi) / e);
}

double ssim(const Image& x_hat, const Image& x, const SsimConfig& cfg) {
  cfg.validate();
  check_pair(x_hat, x, "ssim");
  const std::size_t w = cfg.window;
  if (x.rows < w || x.cols < w) {
    throw std::invalid_argument("ssim: image " + std::to_string(x.rows) + "x" +
                                std::to_string(x.cols) + " is smaller than the " +
                                std::to_string(w) + "x" + std::to_string(w) + " window");
  }
  double L = cfg.dynamic_range;
  if (!(L > 0.0)) {
    const auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
    L = *hi - *lo;
    if (!(L > 0.0)) {
      throw std::invalid_argument("ssim: constant reference image; pass an explicit dynamic range");
    }
  }
  const double c1 = (cfg.k1 * L) * (cfg.k1 * L);
  const double c2 = (cfg.k2 * L) * (cfg.k2 * L);

  // Window sums via summed-area tables of a, b, a^2, b^2, ab.
  const std::size_t R = x.rows, C = x.cols, S = C + 1;
  std::vector<double> sa((R + 1) * S), sb((R + 1) * S), saa((R + 1) * S), sbb((R + 1) * S),
      sab((R + 1) * S);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      const double a = x_hat.at(r, c), b = x.at(r, c);
      const std::size_t i = (r + 1) * S + c + 1, up = r * S + c + 1, left = (r + 1) * S + c,
                        diag = r * S + c;
      sa[i] = a + sa[up] + sa[left] - sa[diag];
      sb[i] = b + sb[up] + sb[left] - sb[diag];
      saa[i] = a * a + saa[up] + saa[left] - saa[diag];
      sbb[i] = b * b + sbb[up] + sbb[left] - sbb[diag];
      sab[i] = a * b + sab[up] + sab[left] - sab[diag];
    }
  }
  auto box = [&](const std::vector<double>& t, std::size_t r, std::size_t c) {
    return t[(r + w) * S + c + w] - t[r * S + c + w] - t[(r + w) * S + c] + t[r * S + c];
  };
  const double n = static_cast<double>(w * w);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + w <= R; ++r) {
    for (std::size_t c = 0; c + w <= C; ++c) {
      const double ma = box(sa, r, c) / n, mb = box(sb, r, c) / n;
      // Population (1/n) moments. Not clamped: c2 dwarfs any cancellation
      // error, and unclamped terms keep SSIM(x, x) exactly 1.
      const double va = box(saa, r, c) / n - ma * ma;
      const double vb = box(sbb, r, c) / n - mb * mb;
      const double cov = box(sab, r, c) / n - ma * mb;
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace tomoforge

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "test_util.hpp"
#include "tomoforge/ct/fbp.hpp"
#include "tomoforge/ct/simulator.hpp"
#include "tomoforge/io/phantom.hpp"
#include "tomoforge/metrics.hpp"

using namespace tomoforge;

TEST_CASE("filter response") {
  const FilterSpec hann{FilterWindow::hann, 0.8};
  const auto h = build_filter(100, hann);
  const std::size_t P = h.size();
  CHECK(P == 256);
  CHECK(h[0] == 0.0);
  for (std::size_t k = 1; k < P; ++k) {
    CHECK(h[k] == h[P - k]);
    const double nu = static_cast<double>(std::min(k, P - k)) / (0.5 * P);
    if (nu > 0.8) CHECK(h[k] == 0.0);
    else CHECK(h[k] >= 0.0);
  }
  // Hann: cos^2(pi nu / 1.6) times the ramp; at nu = 0.4 the window is 1/2.
  const std::size_t k04 = static_cast<std::size_t>(0.4 * 0.5 * P + 0.5);
  const double nu = static_cast<double>(k04) / (0.5 * P);
  CHECK(std::abs(h[k04] - nu * std::pow(std::cos(std::numbers::pi * nu / 1.6), 2)) <= 1e-15);

  const auto ramp = build_filter(100, {FilterWindow::ramp, 1.0});
  CHECK(ramp[P / 2] == doctest::Approx(1.0));
  CHECK_THROWS_AS(build_filter(1, hann), std::invalid_argument);
  CHECK_THROWS_AS(build_filter(10, {FilterWindow::hann, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(build_filter(10, {FilterWindow::hann, 1.5}), std::invalid_argument);
}

TEST_CASE("zero sinogram reconstructs to zero") {
  const auto g = testutil::small_geometry(16, 24, 32);
  const Image x = fbp_reconstruct(Sinogram(24, 32), g, {});
  for (double v : x.data) CHECK(v == 0.0);
}

TEST_CASE("noise-free Shepp-Logan FBP quality floor") {
  const Image x = shepp_logan(128);
  const auto g = make_geometry(128, 128, 360);
  const Image f = fbp_reconstruct(project(x, g), g, {});
  CHECK(f.rows == 128);
  CHECK(f.cols == 128);
  CHECK(psnr(f, x) >= 25.0);
}

TEST_CASE("noisy low-dose FBP is no better than noise-free FBP") {
  const Image x = shepp_logan(64);
  const auto g = make_geometry(64, 64, 180, 0, 0.3);
  const Sinogram clean = project(x, g);
  const double p_clean = psnr(fbp_reconstruct(clean, g, {}), x);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Sinogram noisy = counts_to_sinogram(sample_counts(clean, 1e3, {}, RngSeed{seed}));
    CHECK(psnr(fbp_reconstruct(noisy, g, {}), x) <= p_clean);
  }
}

TEST_CASE("FBP is linear") {
  const auto g = testutil::small_geometry(16, 24, 32);
  const Sinogram a = testutil::random_sinogram(24, 32, 1), b = testutil::random_sinogram(24, 32, 2);
  Sinogram c(24, 32);
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] = 3.0 * a.data[i] - 0.5 * b.data[i];
  const Image fa = fbp_reconstruct(a, g, {}), fb = fbp_reconstruct(b, g, {}), fc = fbp_reconstruct(c, g, {});
  std::vector<double> expect(fc.size());
  for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = 3.0 * fa.data[i] - 0.5 * fb.data[i];
  CHECK(testutil::max_abs_diff(fc.data, expect) <= 1e-10 * testutil::norm(expect));
}

TEST_CASE("projected impulse peaks at its own location") {
  const auto g = make_geometry(128, 128, 360);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{64, 64}, {30, 90}, {100, 20}}) {
    Image e(128, 128);
    e.at(r, c) = 1.0;
    const Image f = fbp_reconstruct(project(e, g), g, {});
    const auto it = std::max_element(f.data.begin(), f.data.end());
    const std::size_t idx = static_cast<std::size_t>(it - f.data.begin());
    const std::size_t rr = idx / 128, cc = idx % 128;
    CHECK(std::max(rr, r) - std::min(rr, r) <= 1);
    CHECK(std::max(cc, c) - std::min(cc, c) <= 1);
  }
}

TEST_CASE("shape mismatch is rejected") {
  const auto g = testutil::small_geometry(16, 24, 32);
  CHECK_THROWS_AS(fbp_reconstruct(Sinogram(24, 31), g, {}), std::invalid_argument);
}

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tomoforge/nn/autodiff.hpp"
#include "tomoforge/nn/kernels.hpp"
#include "tomoforge/nn/layers.hpp"
#include "tomoforge/nn/network.hpp"
#include "tomoforge/nn/optimizer.hpp"

using namespace tomoforge::nn;

namespace {

template <class T>
Tensor4<T> random_tensor(Shape4 s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-scale, scale);
  Tensor4<T> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(d(rng));
  return t;
}

// Loss <out, R> so that d loss / d out = R.
using Build = std::function<Var<double>(Tape<double>&)>;

double probe(const Build& build, const Tensor4<double>& r) {
  Tape<double> tape;
  const Var<double> out = build(tape);
  tape.clear();
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += out->value[i] * r[i];
  return s;
}

struct GradCheck {
  double worst_rel = 0.0;
  std::size_t checked = 0;
};

// Central differences on every entry of every leaf in `leaves`.
GradCheck check_gradients(const Build& build, const std::vector<Var<double>>& leaves,
                          std::uint64_t seed) {
  Tape<double> tape;
  for (const auto& l : leaves) l->zero_grad();
  const Var<double> out = build(tape);
  const Tensor4<double> r = random_tensor<double>(out->value.shape(), seed);
  tape.backward(out, r);

  GradCheck res;
  const double h = 1e-6;
  for (const auto& leaf : leaves) {
    REQUIRE(leaf->grad.size() == leaf->value.size());
    for (std::size_t i = 0; i < leaf->value.size(); ++i) {
      const double keep = leaf->value[i];
      leaf->value[i] = keep + h;
      const double up = probe(build, r);
      leaf->value[i] = keep - h;
      const double down = probe(build, r);
      leaf->value[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = leaf->grad[i];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      res.worst_rel = std::max(res.worst_rel, std::abs(numeric - analytic) / scale);
      ++res.checked;
    }
  }
  return res;
}

// Keeps every entry at least `gap` away from zero (the LeakyReLU kink).
void push_off_kink(Tensor4<double>& t, double gap) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::abs(t[i]) < gap) t[i] = t[i] < 0.0 ? -gap : gap;
  }
}

}  // namespace

TEST_CASE("conv3x3 with a centred delta kernel is the identity") {
  const std::size_t C = 3;
  auto x = make_var(random_tensor<double>({2, C, 7, 5}, 1), false);
  Tensor4<double> w({C, C, 3, 3});
  for (std::size_t c = 0; c < C; ++c) w.at(c, c, 1, 1) = 1.0;
  auto wv = make_var(w, false);
  auto b = make_var(Tensor4<double>({1, C, 1, 1}), false);
  Tape<double> tape;
  auto y = ops::conv2d(tape, x, wv, b);
  for (std::size_t i = 0; i < x->value.size(); ++i) CHECK(y->value[i] == x->value[i]);
}

TEST_CASE("conv3x3 of ones counts the in-bounds taps") {
  const std::size_t cin = 4;
  const ConvDims d{1, cin, 2, 6, 9};
  std::vector<double> in(d.input_size(), 1.0);
  std::vector<double> w(d.weight_size(), 1.0);
  std::vector<double> b{0.5, -1.0};
  std::vector<double> out(d.output_size());
  conv3x3_forward<double>(in, w, b, out, d);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t r = 0; r < d.height; ++r) {
      for (std::size_t c = 0; c < d.width; ++c) {
        const double rows = (r == 0 || r + 1 == d.height) ? 2.0 : 3.0;
        const double cols = (c == 0 || c + 1 == d.width) ? 2.0 : 3.0;
        const double expect = rows * cols * cin + b[o];
        CHECK(out[(o * d.height + r) * d.width + c] == doctest::Approx(expect).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("SIMD conv kernels match the scalar reference") {
  const std::vector<ConvDims> cases = {
      {1, 1, 8, 16, 16}, {1, 8, 1, 13, 17}, {2, 3, 5, 9, 33},
      {1, 16, 16, 20, 31}, {1, 17, 9, 1, 40}, {1, 5, 7, 3, 1}};
  for (Isa isa : {Isa::avx2, Isa::avx512}) {
    if (!isa_supported(isa)) {
      MESSAGE("skipping unsupported ISA ", std::string(to_string(isa)));
      continue;
    }
    const ConvKernelsF32& k = conv_kernels(isa);
    std::uint64_t seed = 10;
    for (const ConvDims& d : cases) {
      CAPTURE(std::string(to_string(isa)));
      CAPTURE(d.in_channels);
      CAPTURE(d.out_channels);
      CAPTURE(d.height);
      CAPTURE(d.width);
      const auto in = random_tensor<float>({d.batch, d.in_channels, d.height, d.width}, ++seed);
      const auto w = random_tensor<float>({d.out_channels, d.in_channels, 3, 3}, ++seed);
      const auto b = random_tensor<float>({1, d.out_channels, 1, 1}, ++seed);
      const auto go = random_tensor<float>({d.batch, d.out_channels, d.height, d.width}, ++seed);

      std::vector<float> ref(d.output_size()), got(d.output_size());
      scalar::conv3x3_forward<float>(in.values(), w.values(), b.values(), ref, d);
      k.forward(in.values(), w.values(), b.values(), got, d);
      const double tol = 1e-5 * static_cast<double>(9 * d.in_channels);
      for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(std::abs(ref[i] - got[i]) <= tol);

      std::vector<float> gi_ref(d.input_size()), gi(d.input_size());
      std::vector<float> gw_ref(d.weight_size()), gw(d.weight_size());
      std::vector<float> gb_ref(d.out_channels), gb(d.out_channels);
      scalar::conv3x3_backward<float>(go.values(), in.values(), w.values(), gi_ref, gw_ref,
                                      gb_ref, d);
      k.backward(go.values(), in.values(), w.values(), gi, gw, gb, d);
      const double tol_in = 1e-5 * static_cast<double>(9 * d.out_channels);
      const double tol_w = 1e-5 * static_cast<double>(d.batch * d.height * d.width);
      for (std::size_t i = 0; i < gi.size(); ++i) REQUIRE(std::abs(gi_ref[i] - gi[i]) <= tol_in);
      for (std::size_t i = 0; i < gw.size(); ++i) REQUIRE(std::abs(gw_ref[i] - gw[i]) <= tol_w);
      for (std::size_t i = 0; i < gb.size(); ++i) REQUIRE(std::abs(gb_ref[i] - gb[i]) <= tol_w);

      // Gradient of the input is optional.
      k.backward(go.values(), in.values(), w.values(), {}, gw, gb, d);
      for (std::size_t i = 0; i < gw.size(); ++i) REQUIRE(std::abs(gw_ref[i] - gw[i]) <= tol_w);
    }
  }
}

TEST_CASE("batch norm output has zero mean and unit variance per channel") {
  const auto x = random_tensor<double>({2, 3, 5, 4}, 3, 4.0);
  std::vector<double> gamma{1.0, 1.0, 1.0}, beta{0.0, 0.0, 0.0};
  BatchNormCache<double> cache;
  const auto y = batchnorm_forward<double>(x, gamma, beta, 0.0 + 1e-12, cache);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0, s2 = 0.0;
    const double n = 2.0 * 20.0;
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t i = 0; i < 20; ++i) {
        const double v = y[(b * 3 + c) * 20 + i];
        s += v;
        s2 += v * v;
      }
    }
    CHECK(std::abs(s / n) < 1e-12);
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("batch norm rejects channels with a single element") {
  Tensor4<double> x({1, 2, 1, 1}, 1.0);
  std::vector<double> g{1.0, 1.0}, b{0.0, 0.0};
  BatchNormCache<double> cache;
  CHECK_THROWS_AS(batchnorm_forward<double>(x, g, b, 1e-5, cache), std::invalid_argument);
}

TEST_CASE("leaky relu forward and subgradient at zero") {
  Tensor4<double> x({1, 1, 1, 4}, std::vector<double>{-2.0, 0.0, 3.0, -0.5});
  const auto y = leaky_relu_forward<double>(x, 0.01);
  CHECK(y[0] == doctest::Approx(-0.02));
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 3.0);
  Tensor4<double> g({1, 1, 1, 4}, 1.0);
  Tensor4<double> gi;
  leaky_relu_backward<double>(g, x, 0.01, gi);
  CHECK(gi[0] == doctest::Approx(0.01));
  CHECK(gi[1] == doctest::Approx(0.01));
  CHECK(gi[2] == 1.0);
}

TEST_CASE("finite-difference gradients of conv2d") {
  auto x = make_var(random_tensor<double>({2, 3, 6, 5}, 21), true);
  auto w = make_var(random_tensor<double>({4, 3, 3, 3}, 22), true);
  auto b = make_var(random_tensor<double>({1, 4, 1, 1}, 23), true);
  const auto res = check_gradients(
      [&](Tape<double>& t) { return ops::conv2d(t, x, w, b); }, {x, w, b}, 24);
  CHECK(res.checked == x->value.size() + w->value.size() + b->value.size());
  CHECK(res.worst_rel <= 1e-4);
}

TEST_CASE("finite-difference gradients of batch_norm") {
  auto x = make_var(random_tensor<double>({2, 3, 4, 5}, 31, 2.0), true);
  auto g = make_var(random_tensor<double>({1, 3, 1, 1}, 32), true);
  auto b = make_var(random_tensor<double>({1, 3, 1, 1}, 33), true);
  const auto res = check_gradients(
      [&](Tape<double>& t) { return ops::batch_norm(t, x, g, b, 1e-5); }, {x, g, b}, 34);
  CHECK(res.worst_rel <= 1e-4);
}

TEST_CASE("finite-difference gradients of leaky_relu away from the kink") {
  auto xt = random_tensor<double>({1, 2, 5, 5}, 41);
  push_off_kink(xt, 1e-3);
  auto x = make_var(xt, true);
  const auto res = check_gradients(
      [&](Tape<double>& t) { return ops::leaky_relu(t, x, 0.01); }, {x}, 42);
  CHECK(res.worst_rel <= 1e-4);
}

TEST_CASE("finite-difference gradients of add, including a shared operand") {
  auto a = make_var(random_tensor<double>({1, 2, 3, 4}, 51), true);
  auto b = make_var(random_tensor<double>({1, 2, 3, 4}, 52), true);
  const auto res = check_gradients(
      [&](Tape<double>& t) {
        auto s = ops::add(t, a, b);
        return ops::add(t, s, a);
      },
      {a, b}, 53);
  CHECK(res.worst_rel <= 1e-4);
  for (std::size_t i = 0; i < a->value.size(); ++i) {
    CHECK(a->grad[i] == doctest::Approx(2.0 * b->grad[i]));
  }
}

TEST_CASE("add rejects mismatched shapes") {
  auto a = make_var(Tensor4<double>({1, 2, 3, 4}), true);
  auto b = make_var(Tensor4<double>({1, 2, 4, 3}), true);
  Tape<double> t;
  CHECK_THROWS_AS(ops::add(t, a, b), std::invalid_argument);
}

TEST_CASE("finite-difference gradients of a 3-conv 8-channel network on 16x16") {
  NetworkSpec spec;
  spec.depth = 3;
  spec.channels = 8;
  Network<double> net(spec, 5);
  auto x = make_var(random_tensor<double>({1, 1, 16, 16}, 61), true);
  std::vector<Var<double>> leaves = net.parameters();
  leaves.push_back(x);
  const auto res =
      check_gradients([&](Tape<double>& t) { return net.forward(t, x); }, leaves, 62);
  CHECK(res.checked == net.parameter_count() + 256);
  CHECK(res.worst_rel <= 1e-4);
}

TEST_CASE("default network has the expected parameter layout") {
  NetworkSpec spec;
  CHECK(spec.parameter_count() == 1038785);
  Network<float> net(spec, 0);
  CHECK(net.parameter_count() == 1038785);
  const auto layout = net.layout();
  CHECK(layout.front().name == "conv0.weight");
  CHECK(layout.back().name == "conv29.bias");
  CHECK(layout.size() == 2 * 30 + 2 * 28);
}

TEST_CASE("network initialization is seed-deterministic") {
  NetworkSpec spec;
  spec.depth = 4;
  spec.channels = 6;
  Network<float> a(spec, 9), b(spec, 9), c(spec, 10);
  bool any_diff = false;
  for (std::size_t k = 0; k < a.parameters().size(); ++k) {
    const auto& pa = a.parameters()[k]->value;
    const auto& pc = c.parameters()[k]->value;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      REQUIRE(pa[i] == b.parameters()[k]->value[i]);
      any_diff = any_diff || pa[i] != pc[i];
    }
  }
  CHECK(any_diff);
}

TEST_CASE("network with a zeroed last layer outputs its bias") {
  NetworkSpec spec;
  spec.depth = 4;
  spec.channels = 5;
  Network<float> net(spec, 1);
  const auto& params = net.parameters();
  params[params.size() - 2]->value.fill(0.0f);
  params.back()->value.fill(0.25f);
  const auto y = net.infer(random_tensor<float>({1, 1, 9, 11}, 3));
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.25f);
}

TEST_CASE("network rejects the wrong channel count and invalid specs") {
  NetworkSpec spec;
  spec.depth = 3;
  spec.channels = 2;
  Network<double> net(spec, 0);
  Tape<double> t;
  CHECK_THROWS_AS(net.forward(t, make_var(Tensor4<double>({1, 2, 4, 4}), false)),
                  std::invalid_argument);
  spec.depth = 1;
  CHECK_THROWS_AS(Network<double>(spec, 0), std::invalid_argument);
}

TEST_CASE("non-finite activations are reported with the op name") {
  auto x = make_var(Tensor4<double>({1, 1, 3, 3}, 1.0), true);
  auto w = make_var(Tensor4<double>({1, 1, 3, 3}, 1.0), true);
  auto b = make_var(Tensor4<double>({1, 1, 1, 1}, std::nan("")), true);
  Tape<double> t;
  try {
    (void)ops::conv2d(t, x, w, b, "layer7");
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.where().find("layer7") != std::string::npos);
  }
}

TEST_CASE("backward checks its preconditions") {
  Tape<double> t;
  auto x = make_var(Tensor4<double>({1, 1, 2, 2}, 1.0), true);
  CHECK_THROWS_AS(t.backward(x, Tensor4<double>({1, 1, 2, 2})), std::logic_error);
  auto y = ops::leaky_relu(t, x, 0.01);
  CHECK_THROWS_AS(t.backward(y, Tensor4<double>({1, 1, 2, 3})), std::invalid_argument);
}

TEST_CASE("AdamW update matches a hand-computed step") {
  AdamWConfig cfg;
  std::vector<double> p{1.0, -2.0}, g{0.5, -0.25}, m(2), v(2);
  adamw_update<double>(p, g, m, v, 1, cfg);
  // After one step m_hat = g and v_hat = g^2, so the update is lr * g / (|g| + eps).
  for (int i = 0; i < 2; ++i) {
    const double p0 = i == 0 ? 1.0 : -2.0;
    const double gi = i == 0 ? 0.5 : -0.25;
    const double expect = p0 * (1.0 - 1e-3 * 1e-2) - 1e-3 * gi / (std::abs(gi) + 1e-8);
    CHECK(p[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  std::vector<double> p2 = p;
  adamw_update<double>(p2, g, m, v, 2, cfg);
  const double m2 = 0.9 * 0.05 + 0.1 * 0.5;
  const double v2 = 0.999 * 0.001 * 0.25 + 0.001 * 0.25;
  const double mh = m2 / (1.0 - 0.81);
  const double vh = v2 / (1.0 - 0.999 * 0.999);
  const double expect = p[0] * (1.0 - 1e-5) - 1e-3 * mh / (std::sqrt(vh) + 1e-8);
  CHECK(p2[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("AdamW validates its inputs") {
  AdamWConfig cfg;
  std::vector<double> p(2), g(3), m(2), v(2);
  CHECK_THROWS_AS(adamw_update<double>(p, g, m, v, 1, cfg), std::invalid_argument);
  g.resize(2);
  CHECK_THROWS_AS(adamw_update<double>(p, g, m, v, 0, cfg), std::invalid_argument);
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("AdamW minimizes a quadratic through the optimizer wrapper") {
  auto x = make_var(Tensor4<double>({1, 1, 1, 3}, std::vector<double>{3.0, -1.0, 0.5}), true);
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  Optimizer<double> opt({x}, OptimizerKind::adamw, cfg);
  for (int it = 0; it < 400; ++it) {
    x->zero_grad();
    auto& g = x->grad_buffer();
    for (std::size_t i = 0; i < 3; ++i) g[i] = 2.0 * (x->value[i] - 1.0);
    opt.step();
  }
  CHECK(opt.step_count() == 400);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x->value[i] == doctest::Approx(1.0).epsilon(1e-2));
}

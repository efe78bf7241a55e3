#include "tomoforge/nn/autodiff.hpp"

#include "tomoforge/nn/kernels.hpp"
#include "tomoforge/nn/layers.hpp"

namespace tomoforge::nn::ops {

namespace {

template <class T>
void accumulate(Node<T>& node, const Tensor4<T>& g, const std::string& where) {
  check_finite(g, where);
  Tensor4<T>& dst = node.grad_buffer();
  T* d = dst.data();
  const T* s = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) d[i] += s[i];
}

template <class T>
void accumulate(Node<T>& node, std::span<const T> g) {
  Tensor4<T>& dst = node.grad_buffer();
  T* d = dst.data();
  for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
}

}  // namespace

template <class T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              const std::string& name) {
  const Shape4 xs = x->value.shape();
  const Shape4 ws = weight->value.shape();
  if (ws.height != 3 || ws.width != 3) {
    throw std::invalid_argument(name + ": kernel must be 3x3, got " + to_string(ws));
  }
  if (ws.channels != xs.channels) {
    throw std::invalid_argument(name + ": input has " + std::to_string(xs.channels) +
                                " channels, kernel expects " + std::to_string(ws.channels));
  }
  if (bias->value.size() != ws.batch) {
    throw std::invalid_argument(name + ": bias size does not match output channels");
  }
  const ConvDims d{xs.batch, xs.channels, ws.batch, xs.height, xs.width};
  auto out = make_var(Tensor4<T>(Shape4{xs.batch, ws.batch, xs.height, xs.width}),
                      x->requires_grad || weight->requires_grad || bias->requires_grad, name);
  conv3x3_forward<T>(x->value.values(), weight->value.values(), bias->value.values(),
                     out->value.values(), d);
  check_finite(out->value, name + " forward");
  if (out->requires_grad) {
    tape.record([x, weight, bias, out, d, name] {
      if (out->grad.empty()) return;
      Tensor4<T> gx;
      if (x->requires_grad) gx = Tensor4<T>(x->value.shape());
      std::vector<T> gw(d.weight_size());
      std::vector<T> gb(d.out_channels);
      conv3x3_backward<T>(out->grad.values(), x->value.values(), weight->value.values(),
                          gx.values(), gw, gb, d);
      if (weight->requires_grad) accumulate<T>(*weight, gw);
      if (bias->requires_grad) accumulate<T>(*bias, gb);
      if (x->requires_grad) accumulate(*x, gx, name + " input gradient");
    });
  }
  return out;
}

template <class T>
Var<T> batch_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  double eps, const std::string& name) {
  auto cache = std::make_shared<BatchNormCache<T>>();
  auto out = make_var(batchnorm_forward<T>(x->value, gamma->value.values(),
                                           beta->value.values(), eps, *cache),
                      x->requires_grad || gamma->requires_grad || beta->requires_grad, name);
  check_finite(out->value, name + " forward");
  if (out->requires_grad) {
    tape.record([x, gamma, beta, out, cache, name] {
      if (out->grad.empty()) return;
      Tensor4<T> gx;
      std::vector<T> gg(gamma->value.size());
      std::vector<T> gbeta(beta->value.size());
      batchnorm_backward<T>(out->grad, gamma->value.values(), *cache, gx, gg, gbeta);
      if (gamma->requires_grad) accumulate<T>(*gamma, gg);
      if (beta->requires_grad) accumulate<T>(*beta, gbeta);
      if (x->requires_grad) accumulate(*x, gx, name + " input gradient");
    });
  }
  return out;
}

template <class T>
Var<T> leaky_relu(Tape<T>& tape, const Var<T>& x, double phi, const std::string& name) {
  auto out = make_var(leaky_relu_forward<T>(x->value, phi), x->requires_grad, name);
  if (out->requires_grad) {
    tape.record([x, out, phi, name] {
      if (out->grad.empty()) return;
      Tensor4<T> gx;
      leaky_relu_backward<T>(out->grad, x->value, phi, gx);
      accumulate(*x, gx, name + " input gradient");
    });
  }
  return out;
}

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b, const std::string& name) {
  if (a->value.shape() != b->value.shape()) {
    throw std::invalid_argument(name + ": shape mismatch " + to_string(a->value.shape()) +
                                " vs " + to_string(b->value.shape()));
  }
  Tensor4<T> sum(a->value.shape());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a->value[i] + b->value[i];
  auto out = make_var(std::move(sum), a->requires_grad || b->requires_grad, name);
  check_finite(out->value, name + " forward");
  if (out->requires_grad) {
    tape.record([a, b, out, name] {
      if (out->grad.empty()) return;
      if (a->requires_grad) accumulate(*a, out->grad, name + " gradient");
      if (b->requires_grad) accumulate(*b, out->grad, name + " gradient");
    });
  }
  return out;
}

#define TOMOFORGE_INSTANTIATE(T)                                                                \
  template Var<T> conv2d<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,             \
                            const std::string&);                                               \
  template Var<T> batch_norm<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&, double, \
                                const std::string&);                                           \
  template Var<T> leaky_relu<T>(Tape<T>&, const Var<T>&, double, const std::string&);          \
  template Var<T> add<T>(Tape<T>&, const Var<T>&, const Var<T>&, const std::string&);

TOMOFORGE_INSTANTIATE(float)
TOMOFORGE_INSTANTIATE(double)

#undef TOMOFORGE_INSTANTIATE

}  // namespace tomoforge::nn::ops

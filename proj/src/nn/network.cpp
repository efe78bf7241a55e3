#include "tomoforge/nn/network.hpp"

#include <cmath>
#include <stdexcept>

#include "tomoforge/random.hpp"

namespace tomoforge::nn {

std::size_t NetworkSpec::parameter_count() const noexcept {
  const std::size_t C = channels;
  const std::size_t first = 9 * in_channels * C + C;
  const std::size_t middle = (depth - 2) * (9 * C * C + C + 2 * C);
  const std::size_t last = 9 * C * out_channels + out_channels;
  return first + middle + last;
}

void NetworkSpec::validate() const {
  if (depth < 2) throw std::invalid_argument("network depth must be at least 2 conv layers");
  if (channels == 0 || in_channels == 0 || out_channels == 0) {
    throw std::invalid_argument("network channel counts must be positive");
  }
  if (!(bn_eps > 0.0)) throw std::invalid_argument("batch-norm eps must be positive");
}

template <class T>
Network<T>::Network(NetworkSpec spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
  spec_.validate();
  const double gain = std::sqrt(2.0 / (1.0 + spec_.leaky_slope * spec_.leaky_slope));
  std::uint64_t stream = 0;

  auto add_conv = [&](std::size_t in, std::size_t out, const std::string& prefix) {
    const double std_dev = gain / std::sqrt(static_cast<double>(9 * in));
    Tensor4<T> w(Shape4{out, in, 3, 3});
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<T>(std_dev * standard_normal(seed, stream, i));
    }
    ++stream;
    ConvRef ref{make_var(std::move(w), true, prefix + ".weight"),
                make_var(Tensor4<T>(Shape4{1, out, 1, 1}), true, prefix + ".bias")};
    params_.push_back(ref.weight);
    params_.push_back(ref.bias);
    convs_.push_back(ref);
  };
  auto add_norm = [&](std::size_t ch, const std::string& prefix) {
    NormRef ref{make_var(Tensor4<T>(Shape4{1, ch, 1, 1}, T{1}), true, prefix + ".gamma"),
                make_var(Tensor4<T>(Shape4{1, ch, 1, 1}), true, prefix + ".beta")};
    params_.push_back(ref.gamma);
    params_.push_back(ref.beta);
    norms_.push_back(ref);
  };

  add_conv(spec_.in_channels, spec_.channels, "conv0");
  for (std::size_t i = 1; i + 1 < spec_.depth; ++i) {
    add_conv(spec_.channels, spec_.channels, "conv" + std::to_string(i));
    add_norm(spec_.channels, "bn" + std::to_string(i));
  }
  add_conv(spec_.channels, spec_.out_channels, "conv" + std::to_string(spec_.depth - 1));
}

template <class T>
std::vector<ParamInfo> Network<T>::layout() const {
  std::vector<ParamInfo> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back({p->name, p->value.shape()});
  return out;
}

template <class T>
std::size_t Network<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <class T>
Var<T> Network<T>::forward(Tape<T>& tape, const Var<T>& input) const {
  const Shape4 s = input->value.shape();
  if (s.channels != spec_.in_channels) {
    throw std::invalid_argument("network input must have " + std::to_string(spec_.in_channels) +
                                " channel(s), got shape " + to_string(s));
  }
  const double phi = spec_.leaky_slope;
  Var<T> h = ops::conv2d(tape, input, convs_[0].weight, convs_[0].bias, "conv0");
  h = ops::leaky_relu(tape, h, phi, "act0");
  for (std::size_t i = 1; i + 1 < spec_.depth; ++i) {
    const std::string idx = std::to_string(i);
    h = ops::conv2d(tape, h, convs_[i].weight, convs_[i].bias, "conv" + idx);
    h = ops::batch_norm(tape, h, norms_[i - 1].gamma, norms_[i - 1].beta, spec_.bn_eps,
                        "bn" + idx);
    h = ops::leaky_relu(tape, h, phi, "act" + idx);
  }
  const std::size_t last = spec_.depth - 1;
  return ops::conv2d(tape, h, convs_[last].weight, convs_[last].bias,
                     "conv" + std::to_string(last));
}

template <class T>
Tensor4<T> Network<T>::infer(const Tensor4<T>& input) const {
  Tape<T> tape;
  auto out = forward(tape, make_var(input, false, "input"));
  tape.clear();
  return out->value;
}

template <class T>
void Network<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <class T>
void Network<T>::check_parameters() const {
  for (const auto& p : params_) {
    check_finite(p->value, "parameter " + p->name);
    if (!p->grad.empty()) check_finite(p->grad, "gradient of " + p->name);
  }
}

template class Network<float>;
template class Network<double>;

}  // namespace tomoforge::nn

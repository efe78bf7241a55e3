#pragma once

// Reverse-mode differentiation over a fixed operator set.
//
// Operators executed through a Tape record a backward closure; Tape::backward
// seeds the output gradient and replays the closures in reverse order,
// accumulating into every variable that requires a gradient. A tape is owned
// by one thread at a time.

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tomoforge/nn/tensor.hpp"

namespace tomoforge::nn {

/// Raised when an activation, gradient or parameter stops being finite.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& where, std::size_t index)
      : std::runtime_error("non-finite value in " + where + " at flat index " +
                           std::to_string(index)),
        where_(where) {}
  [[nodiscard]] const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

template <class T>
struct Node {
  Tensor4<T> value;
  Tensor4<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::string name;

  /// Gradient buffer, zero-initialized on first use.
  Tensor4<T>& grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor4<T>(value.shape());
    return grad;
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(T{0});
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> make_var(Tensor4<T> value, bool requires_grad, std::string name = {}) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

/// Throws NonFiniteError naming `where` if `t` holds NaN or Inf.
template <class T>
void check_finite(const Tensor4<T>& t, const std::string& where) {
  if (const std::size_t i = first_non_finite<T>(t.values()); i != npos) {
    throw NonFiniteError(where, i);
  }
}

template <class T>
class Tape {
 public:
  void record(std::function<void()> backward) { ops_.push_back(std::move(backward)); }

  /// Back-propagates `seed` (d loss / d output) through every recorded op.
  /// Throws std::logic_error if nothing was recorded.
  void backward(const Var<T>& output, const Tensor4<T>& seed) {
    if (ops_.empty()) throw std::logic_error("backward called before any recorded forward op");
    if (!output || !output->requires_grad) {
      throw std::logic_error("backward: output does not depend on any trainable variable");
    }
    if (seed.shape() != output->value.shape()) {
      throw std::invalid_argument("backward: seed shape " + to_string(seed.shape()) +
                                  " does not match output " + to_string(output->value.shape()));
    }
    check_finite(seed, "loss gradient");
    output->grad = seed;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  void clear() noexcept { ops_.clear(); }
  [[nodiscard]] std::size_t size() const noexcept { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
};

namespace ops {

/// Shape-preserving 3x3 convolution; weight (out, in, 3, 3) stored as
/// Shape4{out, in, 3, 3}, bias as Shape4{1, out, 1, 1}.
template <class T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              const std::string& name = "conv2d");

/// Batch-statistics normalization; gamma/beta are Shape4{1, C, 1, 1}.
template <class T>
Var<T> batch_norm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  double eps, const std::string& name = "batch_norm");

template <class T>
Var<T> leaky_relu(Tape<T>& tape, const Var<T>& x, double phi,
                  const std::string& name = "leaky_relu");

template <class T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b, const std::string& name = "add");

}  // namespace ops

}  // namespace tomoforge::nn

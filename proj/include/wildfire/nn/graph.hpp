#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "wildfire/nn/tensor.hpp"

namespace wildfire::nn {

/// A value in the computation graph. Operations record their parents and a
/// closure that pushes this node's gradient into them.
template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<S>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<S>(value.shape());
    return grad;
  }
};

template <typename S>
using Var = std::shared_ptr<Node<S>>;

template <typename S>
Var<S> constant(Tensor<S> value) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  return n;
}

template <typename S>
Var<S> parameter(Tensor<S> value) {
  auto n = constant(std::move(value));
  n->requires_grad = true;
  return n;
}

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Creates an op output. When gradients are enabled and any parent needs
// them, the parents and backward closure are retained.
template <typename S>
Var<S> make_result(Tensor<S> value, std::vector<Var<S>> parents, std::function<void(Node<S>&)> backward) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  if (!grad_enabled()) return n;
  bool needs = false;
  for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return n;
}

// Reverse-mode sweep from a scalar root; seeds d(root)/d(root) = 1.
template <typename S>
void backward(const Var<S>& root);

}  // namespace wildfire::nn

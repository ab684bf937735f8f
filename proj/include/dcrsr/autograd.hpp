// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dcrsr/tensor.hpp"

namespace dcrsr {

// A trainable tensor together with its accumulated gradient.
template <class T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  explicit Parameter(Tensor<T> v) : value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    grad.zero();
  }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

// Disables graph construction for the lifetime of the guard (inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

template <class T>
struct Node {
  Tensor<T> own;
  const Tensor<T>* external = nullptr;  // parameter leaves alias the parameter value
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  const Tensor<T>& value() const { return external ? *external : own; }

  // Gradient buffer, zero-initialized on first touch.
  Tensor<T>& grad_buffer() {
    if (grad.shape() != value().shape()) grad = Tensor<T>(value().shape());
    return grad;
  }
};

// Handle to a node in the dynamic graph. Cheap to copy.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  const Tensor<T>& value() const { return node_->value(); }
  const Shape& shape() const { return value().shape(); }
  int dim(int i) const { return value().dim(i); }
  bool requires_grad() const { return node_->requires_grad; }
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> constant(Tensor<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->own = std::move(v);
  return Var<T>(std::move(n));
}

// Leaf that records gradient with respect to an external input tensor.
template <class T>
Var<T> input_leaf(Tensor<T> v, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->own = std::move(v);
  n->requires_grad = requires_grad && grad_enabled();
  return Var<T>(std::move(n));
}

// Leaf aliasing a parameter; gradients accumulate into param.grad on backward.
template <class T>
Var<T> leaf(Parameter<T>& p) {
  auto n = std::make_shared<Node<T>>();
  n->external = &p.value;
  n->requires_grad = p.trainable && grad_enabled();
  if (n->requires_grad) {
    Parameter<T>* pp = &p;
    n->backprop = [pp](Node<T>& self) {
      if (pp->grad.shape() != pp->value.shape()) pp->grad = Tensor<T>(pp->value.shape());
      pp->grad += self.grad;
    };
  }
  return Var<T>(std::move(n));
}

template <class T>
Var<T> detach(const Var<T>& v) {
  return constant(v.value());
}

// Builds the result node of an op. `backprop` is installed only when some
// input requires a gradient, so inference graphs do not retain their inputs.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->own = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any && grad_enabled()) {
    n->requires_grad = true;
    for (auto& in : inputs) n->inputs.push_back(in.ptr());
    n->backprop = std::move(backprop);
  }
  return Var<T>(std::move(n));
}

// Reverse-mode sweep from a scalar root (seed gradient 1).
template <class T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1) throw ShapeError("backward() needs a scalar root");
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{&root.node(), 0}};
  seen.insert(&root.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<T>* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.node().grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

}  // namespace dcrsr

namespace dcrsr {

// Leaf aliasing a parameter that never receives gradient (frozen networks).
template <class T>
Var<T> frozen(const Parameter<T>& p) {
  auto n = std::make_shared<Node<T>>();
  n->external = &p.value;
  return Var<T>(std::move(n));
}

}  // namespace dcrsr

// Copyright 2026 The semtex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Operations on Vars record a
// backward closure only when at least one input requires a gradient and
// grad mode is enabled, so frozen networks evaluated under NoGradGuard leave
// no graph behind.

#pragma once

#include "semtex/core/tensor.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

namespace semtex {

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor<Scalar>& grad_ref() {
    if (grad.numel() != value.numel()) grad = Tensor<Scalar>::zeros(value.shape());
    return grad;
  }

  /// Input k if it takes gradients, else nullptr.
  Node* input(std::size_t k) const {
    Node* n = inputs[k].get();
    return n && n->requires_grad ? n : nullptr;
  }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}  // namespace detail

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

template <typename Scalar_>
class Var {
 public:
  using Scalar = Scalar_;
  using NodeType = Node<Scalar>;

  Var() = default;
  explicit Var(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  static Var constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }
  static Var leaf(Tensor<Scalar> value, bool requires_grad) {
    auto node = std::make_shared<NodeType>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Tensor<Scalar>& grad() const { return node_->grad_ref(); }
  Tensor<Scalar>& mutable_grad() { return node_->grad_ref(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() {
    if (node_->grad.numel()) node_->grad.array().setZero();
  }
  const Shape& shape() const { return node_->value.shape(); }
  Index dim(std::size_t axis) const { return node_->value.dim(axis); }
  Index numel() const { return node_->value.numel(); }
  Scalar item() const { return node_->value[0]; }

  /// Same value, cut from the graph.
  Var detach() const { return constant(node_->value); }

  const std::shared_ptr<NodeType>& node() const { return node_; }

 private:
  std::shared_ptr<NodeType> node_;
};

using Varf = Var<float>;
using Vard = Var<double>;

/// Wraps an op result. The backward closure is kept only when the result
/// participates in differentiation.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs,
                        std::function<void(Node<Scalar>&)> backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool any = false;
  if (grad_enabled())
    for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var<Scalar>(std::move(node));
}

template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, const std::vector<Var<Scalar>>& inputs,
                        std::function<void(Node<Scalar>&)> backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool any = false;
  if (grad_enabled())
    for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var<Scalar>(std::move(node));
}

/// Accumulates d(seed * root)/d(leaf) into every reachable leaf gradient.
template <typename Scalar>
void backward(const Var<Scalar>& root, Scalar seed = Scalar(1)) {
  if (!root.requires_grad()) return;
  using NodeT = Node<Scalar>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior gradients are transient; leaves accumulate across calls.
  for (NodeT* n : order)
    if (n->backward) n->grad = Tensor<Scalar>::zeros(n->value.shape());
  root.node()->grad_ref().array() += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward) {
      n->backward(*n);
      n->grad = Tensor<Scalar>();
    }
  }
}

}  // namespace semtex

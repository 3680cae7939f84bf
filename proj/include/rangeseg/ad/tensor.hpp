// Copyright (c) 2026 The rangeseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode autodiff over dense row-major tensors. Every op records a
// closure that, given the gradient of its output, accumulates into the
// gradients of its inputs. backward() walks the recorded graph once in
// reverse topological order and then releases it.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rangeseg/errors.hpp"

namespace rangeseg::ad
{

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape & s)
{
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape & s)
{
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += (i ? "," : "") + std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail
{

template<typename T>
struct Node
{
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(const std::vector<T> &)> backward;

  std::vector<T> & grad_buffer()
  {
    if (grad.size() != value.size()) {
      grad.assign(value.size(), T(0));
    }
    return grad;
  }
};

inline bool & grad_mode()
{
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables graph recording for its lifetime (inference, finite differences).
class NoGradGuard
{
public:
  NoGradGuard()
  : previous_(detail::grad_mode()) {detail::grad_mode() = false;}
  ~NoGradGuard() {detail::grad_mode() = previous_;}
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard & operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

inline bool grad_enabled() {return detail::grad_mode();}

namespace detail
{

/// value if pre > 0 else slope * value
template<typename T>
inline T leaky_select(T pre, T value, T slope)
{
  return pre > T(0) ? value : slope * value;
}

}  // namespace detail

/// Shared handle to a graph node. Copies alias the same storage.
template<typename T>
class Tensor
{
public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node)
  : node_(std::move(node)) {}

  Tensor(Shape shape, T fill, bool requires_grad = false)
  : node_(std::make_shared<detail::Node<T>>())
  {
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
  : node_(std::make_shared<detail::Node<T>>())
  {
    if (values.size() != shape_numel(shape)) {
      throw ShapeError("tensor of shape " + shape_str(shape) + " cannot hold " +
                       std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false)
  {
    return Tensor(std::move(shape), T(0), requires_grad);
  }

  bool defined() const {return static_cast<bool>(node_);}
  const Shape & shape() const {return node_->shape;}
  std::size_t ndim() const {return node_->shape.size();}
  std::size_t dim(std::size_t i) const {return node_->shape.at(i);}
  std::size_t numel() const {return node_->value.size();}

  std::span<const T> values() const {return node_->value;}
  std::span<T> mutable_values() {return node_->value;}
  const T * data() const {return node_->value.data();}
  T * data() {return node_->value.data();}

  bool has_grad() const {return node_->grad.size() == node_->value.size() && !node_->value.empty();}
  std::span<const T> grad() const {return node_->grad;}
  std::span<T> mutable_grad() {return node_->grad_buffer();}
  void zero_grad() {node_->grad.clear();}

  bool requires_grad() const {return node_->requires_grad;}
  void set_requires_grad(bool on) {node_->requires_grad = on;}

  T item() const
  {
    if (numel() != 1) {
      throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->value[0];
  }

  const NodePtr & node() const {return node_;}

  /// Detached deep copy.
  Tensor clone() const {return Tensor(shape(), node_->value, false);}

private:
  NodePtr node_;
};

/// Wraps a freshly computed value into a graph node. `backward` receives the
/// output gradient and must accumulate into the inputs that require grad.
template<typename T, typename Backward>
Tensor<T> make_result(
  Shape shape, std::vector<T> value, std::initializer_list<Tensor<T>> inputs, Backward && backward)
{
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto & in : inputs) {
      if (in.defined() && in.requires_grad()) {
        needs = true;
        break;
      }
    }
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto & in : inputs) {
      if (in.defined() && in.requires_grad()) {
        node->inputs.push_back(in.node());
      }
    }
    node->backward = std::forward<Backward>(backward);
  }
  return Tensor<T>(std::move(node));
}

/// Reverse sweep from a scalar. Leaf gradients accumulate; the graph
/// (closures and intermediate gradients) is released afterwards.
template<typename T>
void backward(const Tensor<T> & loss)
{
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  using NodeT = detail::Node<T>;
  NodeT * root = loss.node().get();
  if (!root->requires_grad) {
    return;
  }

  std::vector<NodeT *> order;
  std::unordered_set<NodeT *> seen;
  std::vector<std::pair<NodeT *, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto & [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT * child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT * node = *it;
    if (node->backward && node->grad.size() == node->value.size()) {
      node->backward(node->grad);
    }
  }
  for (NodeT * node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->inputs.clear();
      std::vector<T>().swap(node->grad);
    }
  }
}

}  // namespace rangeseg::ad

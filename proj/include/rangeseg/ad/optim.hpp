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

#include <string>
#include <vector>

#include "rangeseg/ad/tensor.hpp"

namespace rangeseg::ad
{

template<typename T>
struct NamedTensor
{
  std::string name;
  Tensor<T> tensor;
};

/// Non-learned state that still belongs in a checkpoint (BN running stats).
template<typename T>
struct NamedBuffer
{
  std::string name;
  std::vector<T> * values;
};

/// p <- p - lr * grad, then clears the gradient. Parameters without a
/// gradient (unused in the last graph) are left untouched.
template<typename T>
void sgd_step(const std::vector<NamedTensor<T>> & params, T lr)
{
  if (!(lr >= T(0))) {
    throw ConfigError("learning rate must be non-negative");
  }
  for (const auto & p : params) {
    Tensor<T> t = p.tensor;
    if (!t.has_grad()) {
      continue;
    }
    auto v = t.mutable_values();
    const auto g = t.grad();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] -= lr * g[i];
    }
    t.zero_grad();
  }
}

/// Plain SGD with optional heavy-ball momentum and L2 weight decay (both off
/// by default).
template<typename T>
class Sgd
{
public:
  explicit Sgd(std::vector<NamedTensor<T>> params, T momentum = T(0), T weight_decay = T(0))
  : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay)
  {
    if (momentum_ != T(0)) {
      velocity_.resize(params_.size());
    }
  }

  void step(T lr)
  {
    if (momentum_ == T(0) && weight_decay_ == T(0)) {
      sgd_step(params_, lr);
      return;
    }
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor<T> t = params_[k].tensor;
      if (!t.has_grad()) {
        continue;
      }
      auto v = t.mutable_values();
      auto g = t.mutable_grad();
      for (std::size_t i = 0; i < v.size(); ++i) {
        g[i] += weight_decay_ * v[i];
      }
      if (momentum_ != T(0)) {
        auto & vel = velocity_[k];
        vel.resize(v.size(), T(0));
        for (std::size_t i = 0; i < v.size(); ++i) {
          vel[i] = momentum_ * vel[i] + g[i];
          v[i] -= lr * vel[i];
        }
      } else {
        for (std::size_t i = 0; i < v.size(); ++i) {
          v[i] -= lr * g[i];
        }
      }
      t.zero_grad();
    }
  }

  void zero_grad()
  {
    for (auto & p : params_) {
      Tensor<T> t = p.tensor;
      t.zero_grad();
    }
  }

private:
  std::vector<NamedTensor<T>> params_;
  T momentum_;
  T weight_decay_;
  std::vector<std::vector<T>> velocity_;
};

}  // namespace rangeseg::ad

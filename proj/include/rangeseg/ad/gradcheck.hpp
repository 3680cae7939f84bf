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

// Central-difference gradient verification. The error for one coordinate is
// |analytic - numeric| / max(1, |analytic|); the checkers return the maximum.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rangeseg/ad/optim.hpp"
#include "rangeseg/ad/tensor.hpp"

namespace rangeseg::ad
{

struct GradCheckReport
{
  double max_error = 0.0;
  std::string worst;   ///< "<tensor name>[<index>]"
  std::size_t checked = 0;
};

/// Checks d f / d x at `point` for a scalar-valued f, fixed step h.
template<typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T> &)> & f, const Tensor<T> & point, T h)
{
  Tensor<T> x(point.shape(), std::vector<T>(point.values().begin(), point.values().end()), true);
  Tensor<T> y = f(x);
  backward(y);
  const std::vector<T> analytic = x.has_grad() ? std::vector<T>(x.grad().begin(), x.grad().end())
                                               : std::vector<T>(x.numel(), T(0));
  double worst = 0.0;
  NoGradGuard guard;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T orig = x.values()[i];
    x.mutable_values()[i] = orig + h;
    const double fp = f(x).item();
    x.mutable_values()[i] = orig - h;
    const double fm = f(x).item();
    x.mutable_values()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * static_cast<double>(h));
    const double a = analytic[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

/// Checks every coordinate of every parameter against a closure that rebuilds
/// the loss from scratch. The step for coordinate x is rel_step * max(1, |x|).
template<typename T>
GradCheckReport grad_check_parameters(
  const std::function<Tensor<T>()> & loss_fn, const std::vector<NamedTensor<T>> & params, double rel_step)
{
  for (const auto & p : params) {
    Tensor<T> t = p.tensor;
    t.zero_grad();
  }
  backward(loss_fn());
  std::vector<std::vector<T>> analytic;
  for (const auto & p : params) {
    analytic.emplace_back(p.tensor.has_grad() ? std::vector<T>(p.tensor.grad().begin(), p.tensor.grad().end())
                                              : std::vector<T>(p.tensor.numel(), T(0)));
  }
  GradCheckReport report;
  NoGradGuard guard;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T> t = params[k].tensor;
    auto v = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const T orig = v[i];
      const T h = static_cast<T>(rel_step * std::max(1.0, std::abs(static_cast<double>(orig))));
      v[i] = orig + h;
      const double fp = loss_fn().item();
      v[i] = orig - h;
      const double fm = loss_fn().item();
      v[i] = orig;
      const double numeric = (fp - fm) / (2.0 * static_cast<double>(h));
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++report.checked;
      if (err > report.max_error) {
        report.max_error = err;
        report.worst = params[k].name + "[" + std::to_string(i) + "]";
      }
    }
    t.zero_grad();
  }
  return report;
}

}  // namespace rangeseg::ad

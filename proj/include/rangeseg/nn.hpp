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

// Small stateful layers over the autodiff ops. Each layer registers its
// tensors under a dotted name path so checkpoints and gradient checks can
// address them.

#include <array>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "rangeseg/ad/conv.hpp"
#include "rangeseg/ad/norm.hpp"
#include "rangeseg/ad/ops.hpp"
#include "rangeseg/ad/optim.hpp"

namespace rangeseg::nn
{

using ad::Mode;
using ad::Tensor;

template<typename T>
struct Registry
{
  std::vector<ad::NamedTensor<T>> params;
  std::vector<ad::NamedBuffer<T>> buffers;

  void add(const std::string & name, const Tensor<T> & t)
  {
    if (t.defined()) {
      params.push_back({name, t});
    }
  }
  void add_buffer(const std::string & name, std::vector<T> & v) {buffers.push_back({name, &v});}

  /// Throws if two entries share a name.
  void check_unique() const
  {
    std::set<std::string> seen;
    for (const auto & p : params) {
      if (!seen.insert(p.name).second) {
        throw ConfigError("duplicate parameter name '" + p.name + "'");
      }
    }
    for (const auto & b : buffers) {
      if (!seen.insert(b.name).second) {
        throw ConfigError("duplicate buffer name '" + b.name + "'");
      }
    }
  }
};

/// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template<typename T>
Tensor<T> uniform_fan_in(ad::Shape shape, std::size_t fan_in, std::mt19937_64 & rng)
{
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(ad::shape_numel(shape));
  for (auto & x : v) {
    x = static_cast<T>(dist(rng));
  }
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template<typename T>
struct Conv
{
  Tensor<T> weight;
  Tensor<T> bias;
  ad::Conv2dOptions opt;

  Conv() = default;
  Conv(
    int in_c, int out_c, std::array<int, 2> kernel, ad::Conv2dOptions options, bool with_bias,
    std::mt19937_64 & rng)
  : opt(options)
  {
    const std::size_t fan_in = static_cast<std::size_t>(in_c / options.groups) * kernel[0] * kernel[1];
    weight = uniform_fan_in<T>(
      {static_cast<std::size_t>(out_c), static_cast<std::size_t>(in_c / options.groups),
        static_cast<std::size_t>(kernel[0]), static_cast<std::size_t>(kernel[1])}, fan_in, rng);
    if (with_bias) {
      bias = Tensor<T>::zeros({static_cast<std::size_t>(out_c)}, true);
    }
  }

  Tensor<T> operator()(const Tensor<T> & x) const {return ad::conv2d(x, weight, bias, opt);}

  void collect(const std::string & prefix, Registry<T> & r)
  {
    r.add(prefix + ".weight", weight);
    r.add(prefix + ".bias", bias);
  }
};

/// 1x1 convolution, i.e. a linear map shared over every spatial position.
template<typename T>
Conv<T> pointwise(int in_c, int out_c, bool with_bias, std::mt19937_64 & rng)
{
  return Conv<T>(in_c, out_c, {1, 1}, {}, with_bias, rng);
}

template<typename T>
struct BatchNorm
{
  Tensor<T> gamma;
  Tensor<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNorm() = default;
  explicit BatchNorm(int channels)
  : gamma(ad::Shape{static_cast<std::size_t>(channels)}, T(1), true),
    beta(ad::Shape{static_cast<std::size_t>(channels)}, T(0), true),
    running_mean(static_cast<std::size_t>(channels), T(0)),
    running_var(static_cast<std::size_t>(channels), T(1)) {}

  Tensor<T> operator()(const Tensor<T> & x, Mode mode)
  {
    return ad::batch_norm(x, gamma, beta, running_mean, running_var, mode, momentum, eps);
  }

  /// Normalization fused with a leaky ReLU.
  Tensor<T> with_act(const Tensor<T> & x, Mode mode, T slope)
  {
    return ad::batch_norm_act(x, gamma, beta, running_mean, running_var, mode, slope, momentum, eps);
  }

  void collect(const std::string & prefix, Registry<T> & r)
  {
    r.add(prefix + ".gamma", gamma);
    r.add(prefix + ".beta", beta);
    r.add_buffer(prefix + ".running_mean", running_mean);
    r.add_buffer(prefix + ".running_var", running_var);
  }
};

/// conv -> BatchNorm -> LeakyReLU
template<typename T>
struct ConvBnAct
{
  Conv<T> conv;
  BatchNorm<T> bn;
  T slope = T(0.01);

  ConvBnAct() = default;
  ConvBnAct(Conv<T> c, int out_c, T leaky_slope)
  : conv(std::move(c)), bn(out_c), slope(leaky_slope) {}

  Tensor<T> operator()(const Tensor<T> & x, Mode mode)
  {
    return bn.with_act(conv(x), mode, slope);
  }

  void collect(const std::string & prefix, Registry<T> & r)
  {
    conv.collect(prefix + ".conv", r);
    bn.collect(prefix + ".bn", r);
  }
};

template<typename T>
ConvBnAct<T> linear_bn_act(int in_c, int out_c, bool with_bias, T slope, std::mt19937_64 & rng)
{
  return ConvBnAct<T>(pointwise<T>(in_c, out_c, with_bias, rng), out_c, slope);
}

}  // namespace rangeseg::nn

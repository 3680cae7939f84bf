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

// Encoder/decoder over the learned grid plus a fine-grained branch on the raw
// range image.
//
//   rep  [B, C6, H/4, W/4] --down--> H/8 --L1 sep--L2 multi-dil-->
//        --up--> H/4 --L3 sep--> --up--> H/2 (+ branch) --L4 sep--> --up--> H
//        --3x3 classifier--> [B, Nc, H, W]
//   img  [B, 5, H, W] --sep s2--sep--sep--> [B, C6/4, H/2, W/2]

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "rangeseg/nn.hpp"
#include "rangeseg/projection_learning.hpp"

namespace rangeseg
{

namespace detail
{

inline ad::Conv2dOptions conv3x3_opts(int dil_rows, int dil_cols, int groups, int stride, bool circular)
{
  ad::Conv2dOptions o;
  o.stride = {stride, stride};
  o.dilation = {dil_rows, dil_cols};
  o.padding = {dil_rows, dil_cols};
  o.groups = groups;
  o.circular_width = circular;
  return o;
}

}  // namespace detail

/// Depthwise 3x3 -> pointwise -> BN -> LeakyReLU. When input and output
/// shapes agree the input is added before the activation:
/// lrelu(x + BN(pw(dw(x)))).
template<typename T>
struct SeparableBlock
{
  nn::Conv<T> depthwise;
  nn::ConvBnAct<T> pointwise;
  bool residual = false;

  SeparableBlock() = default;
  SeparableBlock(int in_c, int out_c, int stride, bool circular, T slope, std::mt19937_64 & rng)
  : depthwise(in_c, in_c, {3, 3}, detail::conv3x3_opts(1, 1, in_c, stride, circular), false, rng),
    pointwise(nn::linear_bn_act<T>(in_c, out_c, true, slope, rng)),
    residual(in_c == out_c && stride == 1) {}

  ad::Tensor<T> operator()(const ad::Tensor<T> & x, nn::Mode mode)
  {
    if (!residual) {
      return pointwise(depthwise(x), mode);
    }
    ad::Tensor<T> y = pointwise.bn(pointwise.conv(depthwise(x)), mode);
    return ad::leaky_relu(ad::add(x, y), pointwise.slope);
  }

  void collect(const std::string & prefix, nn::Registry<T> & r)
  {
    depthwise.collect(prefix + ".dw", r);
    pointwise.collect(prefix + ".pw", r);
  }
};

/// Two parallel depthwise 3x3 kernels (dilation 1 and a larger one), summed,
/// then pointwise -> BN, plus the input, then LeakyReLU.
template<typename T>
struct MultiDilationBlock
{
  nn::Conv<T> depthwise;
  nn::Conv<T> depthwise_dilated;
  nn::ConvBnAct<T> pointwise;

  MultiDilationBlock() = default;
  MultiDilationBlock(int channels, int dil_rows, int dil_cols, bool circular, T slope, std::mt19937_64 & rng)
  : depthwise(channels, channels, {3, 3}, detail::conv3x3_opts(1, 1, channels, 1, circular), false, rng),
    depthwise_dilated(channels, channels, {3, 3},
      detail::conv3x3_opts(dil_rows, dil_cols, channels, 1, circular), false, rng),
    pointwise(nn::linear_bn_act<T>(channels, channels, true, slope, rng)) {}

  ad::Tensor<T> operator()(const ad::Tensor<T> & x, nn::Mode mode)
  {
    ad::Tensor<T> y = pointwise.bn(pointwise.conv(ad::add(depthwise(x), depthwise_dilated(x))), mode);
    return ad::leaky_relu(ad::add(x, y), pointwise.slope);
  }

  void collect(const std::string & prefix, nn::Registry<T> & r)
  {
    depthwise.collect(prefix + ".dw1", r);
    depthwise_dilated.collect(prefix + ".dwd", r);
    pointwise.collect(prefix + ".pw", r);
  }
};

/// Dilation of the l-th multi-dilation block on an axis of the given length:
/// cycles 1, 2, 4, 8 and is capped so the dilated kernel still overlaps the
/// map, i.e. r <= max(1, (len - 1) / 2).
inline int multi_dilation_rate(int layer, int axis_length)
{
  static constexpr int cycle[] = {1, 2, 4, 8};
  const int cap = std::max(1, (axis_length - 1) / 2);
  return std::min(cycle[layer % 4], cap);
}

template<typename T>
class Backbone
{
public:
  using Tensor = ad::Tensor<T>;

  Backbone() = default;
  Backbone(const ModelConfig & cfg, int width, int height, std::mt19937_64 & rng)
  : cfg_(cfg), width_(width), height_(height)
  {
    cfg.validate();
    if (width <= 0 || height <= 0 || width % 8 != 0 || height % 8 != 0) {
      throw ConfigError("image width and height must be positive multiples of 8, got " +
                        std::to_string(width) + "x" + std::to_string(height));
    }
    const T slope = static_cast<T>(cfg.leaky_slope);
    const bool circ = cfg.circular_width;
    const int c6 = cfg.C6;
    const int cb = cfg.C6 / 4;

    down_ = nn::ConvBnAct<T>(
      nn::Conv<T>(c6, c6, {3, 3}, detail::conv3x3_opts(1, 1, 1, 2, circ), true, rng), c6, slope);
    for (int l = 0; l < cfg.L1; ++l) {
      enc_sep_.emplace_back(c6, c6, 1, circ, slope, rng);
    }
    for (int l = 0; l < cfg.L2; ++l) {
      enc_dil_.emplace_back(c6, multi_dilation_rate(l, height / 8), multi_dilation_rate(l, width / 8), circ,
        slope, rng);
    }
    for (int l = 0; l < cfg.L3; ++l) {
      dec_quarter_.emplace_back(c6, c6, 1, circ, slope, rng);
    }
    branch_.emplace_back(kRangeChannels, cb, 2, circ, slope, rng);
    branch_.emplace_back(cb, cb, 1, circ, slope, rng);
    branch_.emplace_back(cb, cb, 1, circ, slope, rng);
    if (cfg.branch_merge == BranchMerge::add) {
      merge_proj_ = nn::Conv<T>(cb, c6, {1, 1}, {}, true, rng);
      merge_bn_ = nn::BatchNorm<T>(c6);
    } else {
      merge_concat_ = nn::linear_bn_act<T>(c6 + cb, c6, true, slope, rng);
    }
    for (int l = 0; l < cfg.L4; ++l) {
      dec_half_.emplace_back(c6, c6, 1, circ, slope, rng);
    }
    classifier_ = nn::Conv<T>(c6, cfg.num_classes, {3, 3}, detail::conv3x3_opts(1, 1, 1, 1, circ), true, rng);
  }

  /// rep [B, C6, H/4, W/4], image [B, 5, H, W] -> logits [B, Nc, H, W].
  Tensor forward(const Tensor & rep, const Tensor & image, nn::Mode mode)
  {
    const std::size_t B = rep.dim(0);
    const ad::Shape want_rep{B, static_cast<std::size_t>(cfg_.C6), static_cast<std::size_t>(height_ / 4),
      static_cast<std::size_t>(width_ / 4)};
    const ad::Shape want_img{B, static_cast<std::size_t>(kRangeChannels), static_cast<std::size_t>(height_),
      static_cast<std::size_t>(width_)};
    if (rep.shape() != want_rep || image.shape() != want_img) {
      throw ShapeError("backbone expects " + ad::shape_str(want_rep) + " and " + ad::shape_str(want_img) + ", got " +
                       ad::shape_str(rep.shape()) + " and " + ad::shape_str(image.shape()));
    }
    const bool circ = cfg_.circular_width;

    Tensor x = down_(rep, mode);
    for (auto & b : enc_sep_) {
      x = b(x, mode);
    }
    for (auto & b : enc_dil_) {
      x = b(x, mode);
    }
    x = ad::bilinear_upsample2x(x, circ);
    for (auto & b : dec_quarter_) {
      x = b(x, mode);
    }
    x = ad::bilinear_upsample2x(x, circ);

    Tensor f = image;
    for (auto & b : branch_) {
      f = b(f, mode);
    }
    if (cfg_.branch_merge == BranchMerge::add) {
      x = ad::add(x, merge_bn_(merge_proj_(f), mode));
    } else {
      x = merge_concat_(ad::concat_channels<T>({x, f}), mode);
    }
    for (auto & b : dec_half_) {
      x = b(x, mode);
    }
    x = ad::bilinear_upsample2x(x, circ);
    return classifier_(x);
  }

  void collect(const std::string & prefix, nn::Registry<T> & r)
  {
    down_.collect(prefix + ".down", r);
    for (std::size_t i = 0; i < enc_sep_.size(); ++i) {
      enc_sep_[i].collect(prefix + ".enc_sep" + std::to_string(i), r);
    }
    for (std::size_t i = 0; i < enc_dil_.size(); ++i) {
      enc_dil_[i].collect(prefix + ".enc_dil" + std::to_string(i), r);
    }
    for (std::size_t i = 0; i < dec_quarter_.size(); ++i) {
      dec_quarter_[i].collect(prefix + ".dec_q" + std::to_string(i), r);
    }
    for (std::size_t i = 0; i < branch_.size(); ++i) {
      branch_[i].collect(prefix + ".branch" + std::to_string(i), r);
    }
    if (cfg_.branch_merge == BranchMerge::add) {
      merge_proj_.collect(prefix + ".merge.proj", r);
      merge_bn_.collect(prefix + ".merge.bn", r);
    } else {
      merge_concat_.collect(prefix + ".merge", r);
    }
    for (std::size_t i = 0; i < dec_half_.size(); ++i) {
      dec_half_[i].collect(prefix + ".dec_h" + std::to_string(i), r);
    }
    classifier_.collect(prefix + ".classifier", r);
  }

  int width() const {return width_;}
  int height() const {return height_;}

private:
  ModelConfig cfg_;
  int width_ = 0;
  int height_ = 0;
  nn::ConvBnAct<T> down_;
  std::vector<SeparableBlock<T>> enc_sep_;
  std::vector<MultiDilationBlock<T>> enc_dil_;
  std::vector<SeparableBlock<T>> dec_quarter_;
  std::vector<SeparableBlock<T>> branch_;
  nn::Conv<T> merge_proj_;
  nn::BatchNorm<T> merge_bn_;
  nn::ConvBnAct<T> merge_concat_;
  std::vector<SeparableBlock<T>> dec_half_;
  nn::Conv<T> classifier_;
};

}  // namespace rangeseg

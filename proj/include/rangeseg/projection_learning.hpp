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

// Learned projection from point groups to a 2D feature grid.
//
// Tensors flowing through the module are laid out [B, C, P, N] (groups along
// the third axis, slots along the fourth), so a 1x1 convolution is a linear
// layer shared by every slot of every group.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "rangeseg/errors.hpp"
#include "rangeseg/grouping.hpp"
#include "rangeseg/nn.hpp"

namespace rangeseg
{

enum class BranchMerge { add, concat };

struct ModelConfig
{
  std::string preset = "custom";
  int C3 = 12;
  int C4 = 24;
  int C5 = 48;
  int C6 = 96;
  int L1 = 14;
  int L2 = 10;
  int L3 = 2;
  int L4 = 1;
  int num_classes = 4;

  double leaky_slope = 0.01;
  bool circular_width = false;
  BranchMerge branch_merge = BranchMerge::add;
  std::array<int, 3> context_dilations{1, 2, 3};

  bool use_local = true;
  bool use_context = true;
  bool use_attention = true;
  bool use_spatial = true;
  bool use_relative_features = true;

  /// Channels entering the projection module.
  int input_channels() const {return use_relative_features ? kGroupChannels : kRangeChannels;}

  /// Width of the fused grid before the bottleneck.
  int c7() const
  {
    return (use_local ? C5 : 0) + (use_context ? 3 * C4 : 0) + (use_spatial ? C5 : 0);
  }

  void validate() const
  {
    for (const int c : {C3, C4, C5, C6, num_classes}) {
      if (c < 1) {
        throw ConfigError("model channel counts and class count must be positive");
      }
    }
    if (C6 % 4 != 0) {
      throw ConfigError("C6 must be divisible by 4 (branch width is C6/4), got " + std::to_string(C6));
    }
    for (const int l : {L1, L2, L3, L4}) {
      if (l < 0) {
        throw ConfigError("layer counts must be non-negative");
      }
    }
    if (c7() == 0) {
      throw ConfigError("at least one of local, context, spatial extractors must be enabled");
    }
    for (const int d : context_dilations) {
      if (d < 1) {
        throw ConfigError("context dilations must be >= 1");
      }
    }
  }

  static ModelConfig from_preset(const std::string & name, int num_classes)
  {
    ModelConfig c;
    c.preset = name;
    c.num_classes = num_classes;
    if (name == "full") {
      c.C3 = 24, c.C4 = 48, c.C5 = 96, c.C6 = 192;
      c.L1 = 50, c.L2 = 30, c.L3 = 4, c.L4 = 2;
    } else if (name == "small") {
      c.C3 = 16, c.C4 = 32, c.C5 = 64, c.C6 = 128;
      c.L1 = 24, c.L2 = 20, c.L3 = 2, c.L4 = 1;
    } else if (name == "tiny") {
      c.C3 = 12, c.C4 = 24, c.C5 = 48, c.C6 = 96;
      c.L1 = 14, c.L2 = 10, c.L3 = 2, c.L4 = 1;
    } else {
      throw ConfigError("unknown preset '" + name + "' (expected full, small or tiny)");
    }
    return c;
  }
};

/// A batch of same-shaped point groups in network layout.
template<typename T>
struct GroupBatch
{
  ad::Tensor<T> features;               ///< [B, Cin, P, N]
  std::vector<std::int32_t> lattice;    ///< [B * P * N], see PointGroups::lattice_slots
  int grid_height = 0;
  int grid_width = 0;
};

/// Packs C2 groups (11 channels). With `relative` off only the five raw
/// values (x, y, z, depth, remission) are kept.
template<typename T, typename G>
GroupBatch<T> make_group_batch(const std::vector<const PointGroups<G> *> & groups, bool relative)
{
  if (groups.empty()) {
    throw ShapeError("make_group_batch: empty batch");
  }
  const auto & g0 = *groups.front();
  if (g0.channels != kGroupChannels) {
    throw ShapeError("make_group_batch expects augmented 11-channel groups");
  }
  const std::size_t B = groups.size();
  const std::size_t P = static_cast<std::size_t>(g0.num_groups);
  const std::size_t N = static_cast<std::size_t>(g0.group_size);
  std::vector<int> channels;
  for (int c = 0; c < kGroupChannels; ++c) {
    if (relative || (c % 2 == 0 && c < 2 * kRangeChannels)) {
      channels.push_back(c);
    }
  }
  const std::size_t C = channels.size();
  std::vector<T> v(B * C * P * N);
  GroupBatch<T> out;
  out.lattice.reserve(B * P * N);
  out.grid_height = g0.grid_height;
  out.grid_width = g0.grid_width;
  for (std::size_t b = 0; b < B; ++b) {
    const auto & g = *groups[b];
    if (g.num_groups != g0.num_groups || g.group_size != g0.group_size || g.channels != g0.channels ||
      g.grid_width != g0.grid_width)
    {
      throw ShapeError("make_group_batch: groups in a batch must share their layout");
    }
    for (std::size_t ci = 0; ci < C; ++ci) {
      T * dst = v.data() + (b * C + ci) * P * N;
      for (std::size_t s = 0; s < P * N; ++s) {
        dst[s] = static_cast<T>(g.data[s * kGroupChannels + channels[ci]]);
      }
    }
    const auto table = g.lattice_slots();
    out.lattice.insert(out.lattice.end(), table.begin(), table.end());
  }
  out.features = ad::Tensor<T>({B, C, P, N}, std::move(v));
  return out;
}

template<typename T>
class ProjectionModule
{
public:
  using Tensor = ad::Tensor<T>;

  ProjectionModule() = default;
  ProjectionModule(const ModelConfig & cfg, int group_size, std::mt19937_64 & rng)
  : cfg_(cfg), group_size_(group_size)
  {
    cfg.validate();
    const T slope = static_cast<T>(cfg.leaky_slope);
    const int cin = cfg.input_channels();
    if (cfg.use_local || cfg.use_context) {
      local_[0] = nn::linear_bn_act<T>(cin, cfg.C3, true, slope, rng);
      local_[1] = nn::linear_bn_act<T>(cfg.C3, cfg.C4, true, slope, rng);
    }
    if (cfg.use_local) {
      local_[2] = nn::linear_bn_act<T>(cfg.C4, cfg.C4, true, slope, rng);
      local_[3] = nn::linear_bn_act<T>(cfg.C4, cfg.C5, true, slope, rng);
    }
    if (cfg.use_context) {
      for (auto & c : context_) {
        c = nn::linear_bn_act<T>(cfg.C4, cfg.C4, true, slope, rng);
      }
    }
    if (cfg.use_spatial) {
      spatial_ = nn::ConvBnAct<T>(
        nn::Conv<T>(cin, cfg.C5, {1, group_size}, {}, true, rng), cfg.C5, slope);
    }
    const int c7 = cfg.c7();
    if (cfg.use_attention) {
      attention_ = nn::pointwise<T>(c7, c7, true, rng);
    }
    bottleneck_ = nn::linear_bn_act<T>(c7, cfg.C6, true, slope, rng);
  }

  /// Returns (2nd-layer output, 4th-layer output), both [B, C, P, N]. The
  /// fourth is undefined when the local extractor is disabled.
  std::pair<Tensor, Tensor> local_extractor(const Tensor & x, nn::Mode mode)
  {
    require_channels(x, cfg_.input_channels(), "local_extractor");
    Tensor h2 = local_[1](local_[0](x, mode), mode);
    if (!cfg_.use_local) {
      return {h2, Tensor()};
    }
    Tensor h4 = local_[3](local_[2](h2, mode), mode);
    return {h2, h4};
  }

  /// feat2 [B, C4, P, N] -> [B, 3*C4, gh, gw].
  Tensor context_extractor(const Tensor & feat2, int grid_height, int grid_width, nn::Mode mode)
  {
    const auto & s = feat2.shape();
    if (s.size() != 4 || s[2] != static_cast<std::size_t>(grid_height) * grid_width) {
      throw ConfigError(
        "context_extractor: " + std::to_string(s.size() == 4 ? s[2] : 0) + " groups do not tile a " +
        std::to_string(grid_height) + "x" + std::to_string(grid_width) + " grid");
    }
    const std::size_t B = s[0], C = s[1];
    Tensor desc = ad::reshape(ad::maxpool_axis(feat2, 3).values,
        {B, C, static_cast<std::size_t>(grid_height), static_cast<std::size_t>(grid_width)});
    std::vector<Tensor> branches;
    for (std::size_t i = 0; i < context_.size(); ++i) {
      Tensor gathered = ad::unfold3x3(desc, cfg_.context_dilations[i], cfg_.circular_width);
      Tensor pooled = ad::maxpool_axis(context_[i](gathered, mode), 3).values;
      branches.push_back(ad::reshape(pooled, desc.shape()));
    }
    return ad::concat_channels(branches);
  }

  /// x [B, Cin, P, N] in storage order -> [B, C5, gh, gw]. Slots are first
  /// put in lattice order so the 1xN kernel sees a fixed spatial layout.
  Tensor spatial_extractor(
    const Tensor & x, const std::vector<std::int32_t> & lattice, int grid_height, int grid_width, nn::Mode mode)
  {
    require_channels(x, cfg_.input_channels(), "spatial_extractor");
    Tensor ordered = ad::gather_last_axis(x, lattice);
    Tensor y = spatial_(ordered, mode);   // [B, C5, P, 1]
    return ad::reshape(y, {x.dim(0), y.dim(1), static_cast<std::size_t>(grid_height),
        static_cast<std::size_t>(grid_width)});
  }

  /// Concatenated grid [B, C7, gh, gw] -> attention -> bottleneck [B, C6, gh, gw].
  Tensor fuse(const std::vector<Tensor> & parts, nn::Mode mode)
  {
    Tensor grid = ad::concat_channels(parts);
    if (grid.dim(1) != static_cast<std::size_t>(cfg_.c7())) {
      throw ShapeError("fuse: expected " + std::to_string(cfg_.c7()) + " channels, got " +
                       std::to_string(grid.dim(1)));
    }
    if (cfg_.use_attention) {
      grid = attend(grid);
    }
    return bottleneck_(grid, mode);
  }

  /// Channel attention: x * sigmoid(conv1x1(mean over the grid)).
  Tensor attend(const Tensor & grid) const
  {
    Tensor s = ad::sigmoid(attention_(ad::global_avg_pool(grid)));
    return ad::mul_channelwise(grid, s);
  }

  Tensor forward(const GroupBatch<T> & batch, nn::Mode mode)
  {
    const Tensor & x = batch.features;
    const std::size_t B = x.dim(0);
    const std::size_t gh = static_cast<std::size_t>(batch.grid_height);
    const std::size_t gw = static_cast<std::size_t>(batch.grid_width);
    if (x.ndim() != 4 || x.dim(3) != static_cast<std::size_t>(group_size_) || x.dim(2) != gh * gw) {
      throw ShapeError("projection module input " + ad::shape_str(x.shape()) + " does not match N=" +
                       std::to_string(group_size_) + " on a " + std::to_string(gh) + "x" + std::to_string(gw) +
                       " grid");
    }
    std::vector<Tensor> parts;
    if (cfg_.use_local || cfg_.use_context) {
      auto [h2, h4] = local_extractor(x, mode);
      if (cfg_.use_local) {
        Tensor local_max = ad::maxpool_axis(h4, 3).values;
        parts.push_back(ad::reshape(local_max, {B, local_max.dim(1), gh, gw}));
      }
      if (cfg_.use_context) {
        parts.push_back(context_extractor(h2, batch.grid_height, batch.grid_width, mode));
      }
    }
    if (cfg_.use_spatial) {
      parts.push_back(spatial_extractor(x, batch.lattice, batch.grid_height, batch.grid_width, mode));
    }
    return fuse(parts, mode);
  }

  void collect(const std::string & prefix, nn::Registry<T> & r)
  {
    if (cfg_.use_local || cfg_.use_context) {
      local_[0].collect(prefix + ".local0", r);
      local_[1].collect(prefix + ".local1", r);
    }
    if (cfg_.use_local) {
      local_[2].collect(prefix + ".local2", r);
      local_[3].collect(prefix + ".local3", r);
    }
    if (cfg_.use_context) {
      for (std::size_t i = 0; i < context_.size(); ++i) {
        context_[i].collect(prefix + ".context" + std::to_string(i), r);
      }
    }
    if (cfg_.use_spatial) {
      spatial_.collect(prefix + ".spatial", r);
    }
    if (cfg_.use_attention) {
      attention_.collect(prefix + ".attention", r);
    }
    bottleneck_.collect(prefix + ".bottleneck", r);
  }

  const ModelConfig & config() const {return cfg_;}
  int group_size() const {return group_size_;}

  // Layers are exposed for white-box tests.
  std::array<nn::ConvBnAct<T>, 4> & local_layers() {return local_;}
  std::array<nn::ConvBnAct<T>, 3> & context_layers() {return context_;}
  nn::ConvBnAct<T> & spatial_layer() {return spatial_;}
  nn::Conv<T> & attention_layer() {return attention_;}
  nn::ConvBnAct<T> & bottleneck_layer() {return bottleneck_;}

private:
  static void require_channels(const Tensor & x, int c, const char * op)
  {
    if (x.ndim() != 4 || x.dim(1) != static_cast<std::size_t>(c)) {
      throw ShapeError(std::string(op) + ": expected [B, " + std::to_string(c) + ", P, N], got " +
                       ad::shape_str(x.shape()));
    }
  }

  ModelConfig cfg_;
  int group_size_ = 0;
  std::array<nn::ConvBnAct<T>, 4> local_;
  std::array<nn::ConvBnAct<T>, 3> context_;
  nn::ConvBnAct<T> spatial_;
  nn::Conv<T> attention_;
  nn::ConvBnAct<T> bottleneck_;
};

}  // namespace rangeseg

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

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rangeseg/backbone.hpp"
#include "rangeseg/grouping.hpp"
#include "rangeseg/projection.hpp"
#include "rangeseg/projection_learning.hpp"

namespace rangeseg
{

/// Grouping used in front of the network: 4x4 windows, stride 4, so the
/// learned grid is (H/4) x (W/4).
inline GroupingConfig network_grouping() {return GroupingConfig{4, 4, 1, GroupPadding::none};}

/// Range-image features of a batch as [B, 5, H, W].
template<typename T>
ad::Tensor<T> make_image_batch(const std::vector<const RangeImage *> & images)
{
  if (images.empty()) {
    throw ShapeError("make_image_batch: empty batch");
  }
  const int w = images.front()->width;
  const int h = images.front()->height;
  const std::size_t per = static_cast<std::size_t>(kRangeChannels) * w * h;
  std::vector<T> v;
  v.reserve(images.size() * per);
  for (const RangeImage * img : images) {
    if (img->width != w || img->height != h) {
      throw ShapeError("make_image_batch: images in a batch must share their size");
    }
    for (const double f : img->features) {
      v.push_back(static_cast<T>(f));
    }
  }
  return ad::Tensor<T>(
    {images.size(), static_cast<std::size_t>(kRangeChannels), static_cast<std::size_t>(h),
      static_cast<std::size_t>(w)}, std::move(v));
}

/// Network-ready view of one scan.
struct PreparedScan
{
  RangeImage image;
  PointGroups<double> groups;   ///< augmented, 11 channels
};

inline PreparedScan prepare_scan(RangeImage image)
{
  PreparedScan s;
  s.groups = augment_features(make_groups<double>(image, network_grouping()));
  s.image = std::move(image);
  return s;
}

template<typename T>
struct ModelInput
{
  GroupBatch<T> groups;
  ad::Tensor<T> image;
};

template<typename T>
ModelInput<T> make_model_input(const std::vector<const PreparedScan *> & scans, bool relative_features)
{
  std::vector<const PointGroups<double> *> g;
  std::vector<const RangeImage *> im;
  for (const PreparedScan * s : scans) {
    g.push_back(&s->groups);
    im.push_back(&s->image);
  }
  return {make_group_batch<T>(g, relative_features), make_image_batch<T>(im)};
}

template<typename T>
std::size_t count_parameters(const std::vector<ad::NamedTensor<T>> & params)
{
  std::size_t n = 0;
  for (const auto & p : params) {
    n += p.tensor.numel();
  }
  return n;
}

/// Projection module + backbone for W x H range images.
template<typename T>
class SegmentationModel
{
public:
  using Tensor = ad::Tensor<T>;

  SegmentationModel(const ModelConfig & cfg, int width, int height, std::uint64_t seed)
  : cfg_(cfg), width_(width), height_(height)
  {
    std::mt19937_64 rng(seed);
    const GroupingConfig g = network_grouping();
    projection_ = ProjectionModule<T>(cfg, g.k * g.k, rng);
    backbone_ = Backbone<T>(cfg, width, height, rng);
    projection_.collect("proj", registry_);
    backbone_.collect("backbone", registry_);
    registry_.check_unique();
  }

  // Layers register raw pointers to their own buffers, so the model is pinned.
  SegmentationModel(const SegmentationModel &) = delete;
  SegmentationModel & operator=(const SegmentationModel &) = delete;

  /// Logits [B, Nc, H, W].
  Tensor forward(const ModelInput<T> & in, nn::Mode mode)
  {
    Tensor rep = projection_.forward(in.groups, mode);
    return backbone_.forward(rep, in.image, mode);
  }

  const std::vector<ad::NamedTensor<T>> & parameters() const {return registry_.params;}
  const std::vector<ad::NamedBuffer<T>> & buffers() const {return registry_.buffers;}
  std::size_t parameter_count() const {return count_parameters(registry_.params);}

  const ModelConfig & config() const {return cfg_;}
  int width() const {return width_;}
  int height() const {return height_;}
  ProjectionModule<T> & projection() {return projection_;}
  Backbone<T> & backbone() {return backbone_;}

private:
  ModelConfig cfg_;
  int width_;
  int height_;
  ProjectionModule<T> projection_;
  Backbone<T> backbone_;
  nn::Registry<T> registry_;
};

}  // namespace rangeseg

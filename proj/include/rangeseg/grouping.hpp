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

// Sliding-window neighbor search on the range image. A k x k window (with
// optional dilation) is slid over the image; each placement yields one group
// of N = k^2 slots. Windows are enumerated row-major over their origins and
// slots row-major over the window lattice.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rangeseg/errors.hpp"
#include "rangeseg/projection.hpp"

namespace rangeseg
{

enum class GroupPadding { none, zero };

struct GroupingConfig
{
  int k = 4;
  int stride = 4;
  int dilation = 1;
  GroupPadding padding = GroupPadding::none;

  int extent() const {return dilation * (k - 1) + 1;}

  /// Number of window placements along an axis of the given length.
  int windows_along(int length) const
  {
    const int eff = extent();
    if (padding == GroupPadding::none) {
      return (length - eff) / stride + 1;
    }
    if (length <= eff) {
      return 1;
    }
    return (length - eff + stride - 1) / stride + 1;
  }

  void validate(int width, int height) const
  {
    if (k < 1 || stride < 1 || dilation < 1) {
      throw ConfigError("grouping needs k, stride and dilation >= 1");
    }
    if (padding == GroupPadding::none) {
      for (const int len : {width, height}) {
        if (len % stride != 0 || len < extent() || (len - extent()) % stride != 0) {
          throw ConfigError(
            "grouping without padding needs image sides divisible by the stride with full windows; got " +
            std::to_string(width) + "x" + std::to_string(height) + ", k=" + std::to_string(k) +
            ", stride=" + std::to_string(stride) + ", dilation=" + std::to_string(dilation));
        }
      }
    }
  }
};

/// Channel layout after augmentation.
enum class GroupChannel : int
{
  x = 0, x_r, y, y_r, z, z_r, depth, depth_r, remission, remission_r, d_euc
};
inline constexpr int kGroupChannels = 11;

/// P groups x N slots x C channels, stored [p][n][c].
template<typename T = double>
struct PointGroups
{
  int num_groups = 0;    ///< P
  int group_size = 0;    ///< N
  int channels = 0;      ///< 5 before augmentation, 11 after
  int grid_width = 0;    ///< window placements per row
  int grid_height = 0;   ///< window rows; P == grid_width * grid_height
  int k = 0;
  int dilation = 1;
  std::vector<T> data;
  std::vector<PixelCoord> origin;          ///< source pixel per slot, may lie outside the image
  std::vector<PixelCoord> window_origin;   ///< top-left lattice pixel per group
  std::vector<std::uint8_t> present;       ///< 0 at padded or empty-pixel slots

  std::size_t slot(int p, int n) const {return static_cast<std::size_t>(p) * group_size + n;}
  T & at(int p, int n, int c) {return data[slot(p, n) * channels + c];}
  const T & at(int p, int n, int c) const {return data[slot(p, n) * channels + c];}

  /// For each group, the storage slot holding each lattice position (row-major
  /// over the k x k window). Identity for freshly built groups; any within-group
  /// reordering of slots is undone by reading through this table.
  std::vector<std::int32_t> lattice_slots() const
  {
    std::vector<std::int32_t> table(static_cast<std::size_t>(num_groups) * group_size, -1);
    for (int p = 0; p < num_groups; ++p) {
      const PixelCoord o = window_origin[p];
      for (int n = 0; n < group_size; ++n) {
        const PixelCoord px = origin[slot(p, n)];
        const int dx = (px.u - o.u) / dilation;
        const int dy = (px.v - o.v) / dilation;
        const int j = dy * k + dx;
        if (j < 0 || j >= group_size) {
          throw ShapeError("slot origin outside its window lattice in group " + std::to_string(p));
        }
        table[slot(p, j)] = n;
      }
    }
    return table;
  }
};

/// Windows over the C1 range-image features (5 channels). Empty or padded
/// positions become absent slots with zero features.
template<typename T = double>
PointGroups<T> make_groups(const RangeImage & img, const GroupingConfig & cfg)
{
  cfg.validate(img.width, img.height);
  PointGroups<T> g;
  g.grid_width = cfg.windows_along(img.width);
  g.grid_height = cfg.windows_along(img.height);
  g.num_groups = g.grid_width * g.grid_height;
  g.group_size = cfg.k * cfg.k;
  g.channels = kRangeChannels;
  g.k = cfg.k;
  g.dilation = cfg.dilation;
  const std::size_t n_slots = static_cast<std::size_t>(g.num_groups) * g.group_size;
  g.data.assign(n_slots * g.channels, T(0));
  g.origin.resize(n_slots);
  g.window_origin.resize(static_cast<std::size_t>(g.num_groups));
  g.present.assign(n_slots, 0);

  const std::size_t n_pix = static_cast<std::size_t>(img.width) * img.height;
  for (int gy = 0; gy < g.grid_height; ++gy) {
    for (int gx = 0; gx < g.grid_width; ++gx) {
      const int p = gy * g.grid_width + gx;
      const int u0 = gx * cfg.stride;
      const int v0 = gy * cfg.stride;
      g.window_origin[p] = PixelCoord{u0, v0};
      for (int dy = 0; dy < cfg.k; ++dy) {
        for (int dx = 0; dx < cfg.k; ++dx) {
          const int n = dy * cfg.k + dx;
          const int u = u0 + dx * cfg.dilation;
          const int v = v0 + dy * cfg.dilation;
          g.origin[g.slot(p, n)] = PixelCoord{u, v};
          if (u < 0 || u >= img.width || v < 0 || v >= img.height || !img.valid(u, v)) {
            continue;
          }
          g.present[g.slot(p, n)] = 1;
          const std::size_t idx = img.pixel_index(u, v);
          for (int c = 0; c < kRangeChannels; ++c) {
            g.at(p, n, c) = static_cast<T>(img.features[c * n_pix + idx]);
          }
        }
      }
    }
  }
  return g;
}

/// C1 -> C2: interleave each feature with its deviation from the group mean
/// (over present slots) and append the distance to the mean point.
template<typename T>
PointGroups<T> augment_features(const PointGroups<T> & in)
{
  if (in.channels != kRangeChannels) {
    throw ShapeError("augment_features expects 5-channel groups, got " + std::to_string(in.channels));
  }
  PointGroups<T> out = in;
  out.channels = kGroupChannels;
  out.data.assign(static_cast<std::size_t>(in.num_groups) * in.group_size * kGroupChannels, T(0));

  for (int p = 0; p < in.num_groups; ++p) {
    std::array<double, kRangeChannels> mean{};
    int count = 0;
    for (int n = 0; n < in.group_size; ++n) {
      if (!in.present[in.slot(p, n)]) {
        continue;
      }
      ++count;
      for (int c = 0; c < kRangeChannels; ++c) {
        mean[c] += static_cast<double>(in.at(p, n, c));
      }
    }
    if (count == 0) {
      continue;
    }
    for (auto & m : mean) {
      m /= count;
    }
    for (int n = 0; n < in.group_size; ++n) {
      if (!in.present[in.slot(p, n)]) {
        continue;
      }
      double sq = 0.0;
      for (int c = 0; c < kRangeChannels; ++c) {
        const double value = static_cast<double>(in.at(p, n, c));
        const double rel = value - mean[c];
        out.at(p, n, 2 * c) = static_cast<T>(value);
        out.at(p, n, 2 * c + 1) = static_cast<T>(rel);
        if (c < 3) {
          sq += rel * rel;
        }
      }
      out.at(p, n, static_cast<int>(GroupChannel::d_euc)) = static_cast<T>(std::sqrt(sq));
    }
  }
  return out;
}

/// Debug dump in the range-image export format: N columns x P rows.
template<typename T>
void export_groups(const PointGroups<T> & g, const std::filesystem::path & path)
{
  static const std::vector<std::string> c2_names = {
    "x", "x_r", "y", "y_r", "z", "z_r", "depth", "depth_r", "remission", "remission_r", "d_euc"};
  static const std::vector<std::string> c1_names = {"x", "y", "z", "depth", "remission"};
  const std::size_t n_slots = static_cast<std::size_t>(g.num_groups) * g.group_size;
  std::vector<double> channel_major(n_slots * g.channels);
  for (std::size_t s = 0; s < n_slots; ++s) {
    for (int c = 0; c < g.channels; ++c) {
      channel_major[c * n_slots + s] = static_cast<double>(g.data[s * g.channels + c]);
    }
  }
  export_image_dump(path, g.group_size, g.num_groups,
    g.channels == kGroupChannels ? c2_names : c1_names, channel_major);
}

}  // namespace rangeseg

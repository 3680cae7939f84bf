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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "rangeseg/errors.hpp"
#include "rangeseg/scan_io.hpp"

namespace rangeseg
{

/// Spherical projection geometry. Angles in radians.
struct ProjectionConfig
{
  int width = 2048;
  int height = 64;
  double fov_up = 0.0;
  double fov_down = 0.0;

  double fov() const {return fov_up + fov_down;}

  void validate() const
  {
    if (width <= 0 || height <= 0) {
      throw ConfigError("projection size must be positive, got " + std::to_string(width) + "x" +
                        std::to_string(height));
    }
    if (!(fov() > 0.0)) {
      throw ConfigError("vertical field of view (fov_up + fov_down) must be positive");
    }
  }
};

inline double degrees_to_radians(double deg) {return deg * std::numbers::pi / 180.0;}

struct PixelCoord
{
  int u = 0;  ///< column (azimuth)
  int v = 0;  ///< row (elevation)

  friend bool operator==(const PixelCoord &, const PixelCoord &) = default;
};

/// Channels of a range-image pixel, in storage order.
enum class RangeChannel : int { x = 0, y = 1, z = 2, depth = 3, remission = 4 };
inline constexpr int kRangeChannels = 5;

/// Range image plus the point <-> pixel bookkeeping needed to go back to 3D.
/// Features are stored channel-major: features[(c * height + v) * width + u].
struct RangeImage
{
  int width = 0;
  int height = 0;
  std::vector<double> features;
  std::vector<std::int32_t> representative;  ///< point index per pixel, -1 when empty
  std::vector<PixelCoord> point_to_pixel;

  std::size_t pixel_index(int u, int v) const
  {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width) + static_cast<std::size_t>(u);
  }
  bool valid(int u, int v) const {return representative[pixel_index(u, v)] >= 0;}
  double feature(RangeChannel c, int u, int v) const
  {
    return features[static_cast<std::size_t>(c) * width * height + pixel_index(u, v)];
  }
  double depth(int u, int v) const {return feature(RangeChannel::depth, u, v);}

  std::size_t valid_count() const
  {
    return static_cast<std::size_t>(std::count_if(
      representative.begin(), representative.end(), [](std::int32_t r) {return r >= 0;}));
  }
};

/// Floor-then-clamp discretization of the spherical mapping.
inline PixelCoord project_point(const Point & p, const ProjectionConfig & cfg)
{
  const double x = p.x, y = p.y, z = p.z;
  const double r = std::sqrt(x * x + y * y + z * z);
  if (!(r > 0.0)) {
    throw DomainError("cannot project a point at the sensor origin (zero range)");
  }
  const double u_real = 0.5 * (1.0 - std::atan2(y, x) / std::numbers::pi) * cfg.width;
  const double v_real = (1.0 - (std::asin(z / r) + cfg.fov_up) / cfg.fov()) * cfg.height;
  const auto u = static_cast<long>(std::floor(u_real));
  const auto v = static_cast<long>(std::floor(v_real));
  return PixelCoord{
    static_cast<int>(std::clamp<long>(u, 0, cfg.width - 1)),
    static_cast<int>(std::clamp<long>(v, 0, cfg.height - 1))};
}

/// Nearest point wins a shared pixel; equal depths keep the lower point index.
inline RangeImage build_range_image(const PointCloud & cloud, const ProjectionConfig & cfg)
{
  cfg.validate();
  RangeImage img;
  img.width = cfg.width;
  img.height = cfg.height;
  const std::size_t n_pix = static_cast<std::size_t>(cfg.width) * cfg.height;
  img.features.assign(n_pix * kRangeChannels, 0.0);
  img.representative.assign(n_pix, -1);
  img.point_to_pixel.resize(cloud.size());

  std::vector<double> best_depth(n_pix, 0.0);
  for (std::size_t m = 0; m < cloud.size(); ++m) {
    const Point & p = cloud[m];
    const PixelCoord px = project_point(p, cfg);
    img.point_to_pixel[m] = px;
    const double d = std::sqrt(double(p.x) * p.x + double(p.y) * p.y + double(p.z) * p.z);
    const std::size_t idx = img.pixel_index(px.u, px.v);
    if (img.representative[idx] < 0 || d < best_depth[idx]) {
      img.representative[idx] = static_cast<std::int32_t>(m);
      best_depth[idx] = d;
    }
  }
  for (std::size_t idx = 0; idx < n_pix; ++idx) {
    const std::int32_t m = img.representative[idx];
    if (m < 0) {
      continue;
    }
    const Point & p = cloud[static_cast<std::size_t>(m)];
    img.features[0 * n_pix + idx] = p.x;
    img.features[1 * n_pix + idx] = p.y;
    img.features[2 * n_pix + idx] = p.z;
    img.features[3 * n_pix + idx] = best_depth[idx];
    img.features[4 * n_pix + idx] = p.remission;
  }
  return img;
}

/// Every point takes the label of its pixel, occluded points included.
inline LabelSet reproject_labels(
  const RangeImage & img, const std::vector<ClassId> & pixel_labels, std::size_t num_points)
{
  const std::size_t n_pix = static_cast<std::size_t>(img.width) * img.height;
  if (pixel_labels.size() != n_pix) {
    throw ShapeError("pixel label image has " + std::to_string(pixel_labels.size()) +
                     " entries, range image has " + std::to_string(n_pix) + " pixels");
  }
  if (num_points != img.point_to_pixel.size()) {
    throw ShapeError("point count " + std::to_string(num_points) + " does not match the range image (" +
                     std::to_string(img.point_to_pixel.size()) + ")");
  }
  LabelSet out;
  out.labels.resize(num_points);
  for (std::size_t m = 0; m < num_points; ++m) {
    const PixelCoord px = img.point_to_pixel[m];
    out.labels[m] = pixel_labels[img.pixel_index(px.u, px.v)];
  }
  return out;
}

/// Per-pixel label image built from the representative point of each pixel.
inline std::vector<ClassId> pixel_label_image(const RangeImage & img, const LabelSet & labels, ClassId ignore_id)
{
  std::vector<ClassId> out(img.representative.size(), ignore_id);
  for (std::size_t idx = 0; idx < out.size(); ++idx) {
    const std::int32_t m = img.representative[idx];
    if (m >= 0) {
      out[idx] = labels.labels[static_cast<std::size_t>(m)];
    }
  }
  return out;
}

/// Debug dump: `path` gets W*H*C float32 values laid out [v][u][channel];
/// `path` + ".txt" records the geometry and channel order.
inline void export_image_dump(
  const std::filesystem::path & path, int width, int height,
  const std::vector<std::string> & channel_names,
  const std::vector<double> & channel_major_values)
{
  const std::size_t n_pix = static_cast<std::size_t>(width) * height;
  const std::size_t channels = channel_names.size();
  if (channel_major_values.size() != n_pix * channels) {
    throw ShapeError("image dump: value count does not match geometry");
  }
  std::vector<float> interleaved(n_pix * channels);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n_pix; ++i) {
      interleaved[i * channels + c] = static_cast<float>(channel_major_values[c * n_pix + i]);
    }
  }
  detail::write_all_bytes(path, interleaved.data(), interleaved.size() * sizeof(float));

  std::ofstream hdr(path.string() + ".txt");
  if (!hdr) {
    throw IoError("cannot write header '" + path.string() + ".txt'");
  }
  hdr << "width = " << width << "\n" << "height = " << height << "\n"
      << "channels = " << channels << "\n" << "layout = row-major [row][column][channel], float32 LE\n"
      << "channel_order =";
  for (const auto & name : channel_names) {
    hdr << " " << name;
  }
  hdr << "\n";
}

inline void export_range_image(const RangeImage & img, const std::filesystem::path & path)
{
  export_image_dump(path, img.width, img.height, {"x", "y", "z", "depth", "remission"}, img.features);
}

}  // namespace rangeseg

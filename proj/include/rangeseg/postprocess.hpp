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

// Depth-based KNN label refinement on the range image.
//
// For a point m at pixel (u, v) with depth d_m, the candidates are the valid
// pixels q of the window centred on (u, v); their distance is |d_m - depth(q)|.
// The K closest candidates vote. Ordering is total:
//   (distance, column offset du, row offset dv), offsets signed, ascending.
// A vote tie goes to the tied class whose best candidate comes first in that
// ordering. Points without any valid candidate keep their pixel's label.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rangeseg/errors.hpp"
#include "rangeseg/projection.hpp"
#include "rangeseg/scan_io.hpp"

namespace rangeseg
{

struct KNNConfig
{
  int window = 7;
  int k = 7;
  bool circular_width = false;  ///< wrap the window across the azimuth seam
  bool weighted = false;        ///< Gaussian depth weights instead of one vote each
  double sigma = 1.0;           ///< meters, weighted votes only
  double cutoff = 0.0;          ///< meters; candidates farther than this are dropped, 0 disables

  void validate() const
  {
    if (window < 1 || window % 2 == 0) {
      throw ConfigError("KNN window must be odd and >= 1, got " + std::to_string(window));
    }
    if (k < 1 || k > window * window) {
      throw ConfigError("KNN k must be in [1, window^2], got " + std::to_string(k));
    }
    if (weighted && !(sigma > 0.0)) {
      throw ConfigError("KNN sigma must be positive");
    }
    if (cutoff < 0.0) {
      throw ConfigError("KNN cutoff must be non-negative");
    }
  }
};

struct KnnCandidate
{
  double distance;
  int du;
  int dv;
  ClassId label;
};

inline bool knn_before(const KnnCandidate & a, const KnnCandidate & b)
{
  if (a.distance != b.distance) {
    return a.distance < b.distance;
  }
  if (a.du != b.du) {
    return a.du < b.du;
  }
  return a.dv < b.dv;
}

/// Vote over candidates already sorted by knn_before.
inline ClassId knn_vote(const KnnCandidate * c, int n, const KNNConfig & cfg)
{
  // classes in order of first appearance, so index order is the tie order
  std::array<ClassId, 64> cls{};
  std::array<double, 64> score{};
  std::vector<ClassId> cls_big;
  std::vector<double> score_big;
  ClassId * cp = cls.data();
  double * sp = score.data();
  if (n > 64) {
    cls_big.resize(n);
    score_big.assign(n, 0.0);
    cp = cls_big.data();
    sp = score_big.data();
  }
  int distinct = 0;
  for (int i = 0; i < n; ++i) {
    const double w = cfg.weighted ?
      std::exp(-0.5 * c[i].distance * c[i].distance / (cfg.sigma * cfg.sigma)) : 1.0;
    int j = 0;
    while (j < distinct && cp[j] != c[i].label) {
      ++j;
    }
    if (j == distinct) {
      cp[distinct] = c[i].label;
      sp[distinct] = 0.0;
      ++distinct;
    }
    sp[j] += w;
  }
  int best = 0;
  for (int j = 1; j < distinct; ++j) {
    if (sp[j] > sp[best]) {
      best = j;
    }
  }
  return cp[best];
}

inline LabelSet knn_refine(
  const PointCloud & cloud, const RangeImage & img, const std::vector<ClassId> & pixel_labels,
  const KNNConfig & cfg)
{
  cfg.validate();
  const std::size_t n_pix = static_cast<std::size_t>(img.width) * img.height;
  if (pixel_labels.size() != n_pix) {
    throw ShapeError("pixel label image has " + std::to_string(pixel_labels.size()) +
                     " entries, range image has " + std::to_string(n_pix) + " pixels");
  }
  if (cloud.size() != img.point_to_pixel.size()) {
    throw ShapeError("point count " + std::to_string(cloud.size()) + " does not match the range image (" +
                     std::to_string(img.point_to_pixel.size()) + ")");
  }
  const int half = cfg.window / 2;
  const double * depth = img.features.data() + static_cast<std::size_t>(RangeChannel::depth) * n_pix;
  std::vector<KnnCandidate> cand(static_cast<std::size_t>(cfg.window) * cfg.window);

  LabelSet out;
  out.labels.resize(cloud.size());
  for (std::size_t m = 0; m < cloud.size(); ++m) {
    const Point & p = cloud[m];
    const double dm = std::sqrt(double(p.x) * p.x + double(p.y) * p.y + double(p.z) * p.z);
    const PixelCoord px = img.point_to_pixel[m];
    int n = 0;
    for (int dv = -half; dv <= half; ++dv) {
      const int v = px.v + dv;
      if (v < 0 || v >= img.height) {
        continue;
      }
      for (int du = -half; du <= half; ++du) {
        int u = px.u + du;
        if (cfg.circular_width) {
          u = ((u % img.width) + img.width) % img.width;
        } else if (u < 0 || u >= img.width) {
          continue;
        }
        const std::size_t idx = img.pixel_index(u, v);
        if (img.representative[idx] < 0) {
          continue;
        }
        const double dist = std::abs(dm - depth[idx]);
        if (cfg.cutoff > 0.0 && dist > cfg.cutoff) {
          continue;
        }
        cand[n++] = {dist, du, dv, pixel_labels[idx]};
      }
    }
    if (n == 0) {
      out.labels[m] = pixel_labels[img.pixel_index(px.u, px.v)];
      continue;
    }
    const int k = std::min(cfg.k, n);
    std::partial_sort(cand.begin(), cand.begin() + k, cand.begin() + n, knn_before);
    out.labels[m] = knn_vote(cand.data(), k, cfg);
  }
  return out;
}

}  // namespace rangeseg

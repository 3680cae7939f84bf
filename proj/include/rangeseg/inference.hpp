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

#include <optional>
#include <vector>

#include "rangeseg/evaluation.hpp"
#include "rangeseg/model.hpp"
#include "rangeseg/postprocess.hpp"
#include "rangeseg/projection.hpp"

namespace rangeseg
{

/// Per-pixel argmax of logits [B, Nc, H, W]; ties go to the lower class.
template<typename T>
std::vector<std::vector<ClassId>> argmax_pixels(const ad::Tensor<T> & logits)
{
  const std::size_t B = logits.dim(0), NC = logits.dim(1), HW = logits.dim(2) * logits.dim(3);
  std::vector<std::vector<ClassId>> out(B, std::vector<ClassId>(HW, 0));
  for (std::size_t b = 0; b < B; ++b) {
    const T * l = logits.data() + b * NC * HW;
    std::vector<T> best(l, l + HW);
    for (std::size_t c = 1; c < NC; ++c) {
      const T * lc = l + c * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        if (lc[i] > best[i]) {
          best[i] = lc[i];
          out[b][i] = static_cast<ClassId>(c);
        }
      }
    }
  }
  return out;
}

/// Eval-mode pixel labels for a batch of prepared scans.
template<typename T>
std::vector<std::vector<ClassId>> predict_pixels(
  SegmentationModel<T> & model, const std::vector<const PreparedScan *> & scans)
{
  ad::NoGradGuard no_grad;
  const auto in = make_model_input<T>(scans, model.config().use_relative_features);
  return argmax_pixels(model.forward(in, nn::Mode::eval));
}

/// Point labels for one scan: projection, network, re-projection and, when
/// `knn` is set, KNN refinement.
template<typename T>
LabelSet segment_scan(
  SegmentationModel<T> & model, const PointCloud & cloud, const ProjectionConfig & proj,
  const std::optional<KNNConfig> & knn)
{
  const PreparedScan scan = prepare_scan(build_range_image(cloud, proj));
  const auto pixels = predict_pixels(model, {&scan}).front();
  LabelSet out = knn ? knn_refine(cloud, scan.image, pixels, *knn) :
    reproject_labels(scan.image, pixels, cloud.size());
  out.num_classes = static_cast<ClassId>(model.config().num_classes);
  return out;
}

}  // namespace rangeseg

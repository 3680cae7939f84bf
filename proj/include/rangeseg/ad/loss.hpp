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
#include <limits>
#include <string>
#include <vector>

#include "rangeseg/ad/tensor.hpp"

namespace rangeseg::ad
{

/// Class-weighted softmax cross-entropy over logits [B, Nc, H, W]:
///   L = -(1/M') * sum_m w[t_m] * log softmax(logits)[t_m, m]
/// where the sum runs over the M' targets that are not `ignore_id`.
/// `targets` is laid out [B, H, W].
template<typename T>
Tensor<T> weighted_cross_entropy(
  const Tensor<T> & logits, const std::vector<std::uint32_t> & targets,
  const std::vector<T> & weights, std::uint32_t ignore_id)
{
  const Shape & s = logits.shape();
  if (s.size() != 4) {
    throw ShapeError("weighted_cross_entropy expects logits [B, Nc, H, W], got " + shape_str(s));
  }
  const std::size_t B = s[0], NC = s[1], HW = s[2] * s[3];
  if (targets.size() != B * HW) {
    throw ShapeError("weighted_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(s));
  }
  if (weights.size() != NC) {
    throw ShapeError("weighted_cross_entropy: " + std::to_string(weights.size()) + " class weights for " +
                     std::to_string(NC) + " classes");
  }

  const T * lv = logits.data();
  std::vector<T> probs(logits.numel());
  std::size_t labeled = 0;
  // extended accumulator: sums of a few thousand equal terms stay exact
  long double total = 0.0L;
  for (std::size_t b = 0; b < B; ++b) {
    const T * lb = lv + b * NC * HW;
    T * pb = probs.data() + b * NC * HW;
    for (std::size_t i = 0; i < HW; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t c = 0; c < NC; ++c) {
        mx = std::max(mx, lb[c * HW + i]);
      }
      T z = 0;
      for (std::size_t c = 0; c < NC; ++c) {
        const T e = std::exp(lb[c * HW + i] - mx);
        pb[c * HW + i] = e;
        z += e;
      }
      for (std::size_t c = 0; c < NC; ++c) {
        pb[c * HW + i] /= z;
      }
      const std::uint32_t t = targets[b * HW + i];
      if (t == ignore_id) {
        continue;
      }
      if (t >= NC) {
        throw ShapeError("weighted_cross_entropy: target " + std::to_string(t) + " out of range for " +
                         std::to_string(NC) + " classes");
      }
      ++labeled;
      const double log_p = static_cast<double>(lb[t * HW + i] - mx) - std::log(static_cast<double>(z));
      total -= static_cast<long double>(static_cast<double>(weights[t]) * log_p);
    }
  }
  if (labeled == 0) {
    throw DomainError("weighted_cross_entropy: every target is ignored");
  }
  const T loss = static_cast<T>(static_cast<double>(total / static_cast<long double>(labeled)));

  auto ln = logits.node();
  return make_result<T>(Shape{1}, std::vector<T>{loss}, {logits},
    [ln, probs = std::move(probs), targets, weights, ignore_id, B, NC, HW, labeled](const std::vector<T> & g) {
      auto & gl = ln->grad_buffer();
      const T scale = g[0] / static_cast<T>(labeled);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < HW; ++i) {
          const std::uint32_t t = targets[b * HW + i];
          if (t == ignore_id) {
            continue;
          }
          const T k = scale * weights[t];
          for (std::size_t c = 0; c < NC; ++c) {
            const std::size_t idx = (b * NC + c) * HW + i;
            gl[idx] += k * (probs[idx] - (c == t ? T(1) : T(0)));
          }
        }
      }
    });
}

}  // namespace rangeseg::ad

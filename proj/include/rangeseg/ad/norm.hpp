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
#include <string>
#include <vector>

#include "rangeseg/ad/tensor.hpp"

namespace rangeseg::ad
{

enum class Mode { train, eval };

/// Per-channel batch normalization over every axis except axis 1, followed by
/// a leaky ReLU with the given slope (slope 1 is the identity).
/// Train mode normalizes with the (biased) batch statistics and folds them
/// into the running estimates; eval mode uses the running estimates.
template<typename T>
Tensor<T> batch_norm_act(
  const Tensor<T> & x, const Tensor<T> & gamma, const Tensor<T> & beta,
  std::vector<T> & running_mean, std::vector<T> & running_var, Mode mode, T slope,
  T momentum = T(0.1), T eps = T(1e-5))
{
  const Shape & s = x.shape();
  if (s.size() < 2) {
    throw ShapeError("batch_norm needs rank >= 2, got " + shape_str(s));
  }
  const std::size_t B = s[0], C = s[1];
  if (gamma.numel() != C || beta.numel() != C || running_mean.size() != C || running_var.size() != C) {
    throw ShapeError("batch_norm: channel count " + std::to_string(C) + " does not match parameters");
  }
  const std::size_t inner = B * C == 0 ? 0 : x.numel() / (B * C);
  const std::size_t count = B * inner;
  if (count == 0) {
    throw DomainError("batch_norm over an empty normalization set");
  }

  const T * xv = x.data();
  std::vector<T> mean(C), inv_std(C);
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < C; ++c) {
      // shifted single-pass moments
      const double shift = xv[c * inner];
      double acc = 0, acc2 = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T * row = xv + (b * C + c) * inner;
        // fixed lanes keep the sum vectorizable and its order deterministic
        constexpr std::size_t L = 8;
        double l1[L] = {}, l2[L] = {};
        std::size_t i = 0;
        for (; i + L <= inner; i += L) {
          for (std::size_t j = 0; j < L; ++j) {
            const double d = static_cast<double>(row[i + j]) - shift;
            l1[j] += d;
            l2[j] += d * d;
          }
        }
        for (; i < inner; ++i) {
          const double d = static_cast<double>(row[i]) - shift;
          l1[0] += d;
          l2[0] += d * d;
        }
        for (std::size_t j = 0; j < L; ++j) {
          acc += l1[j];
          acc2 += l2[j];
        }
      }
      const double n = static_cast<double>(count);
      const double m = shift + acc / n;
      const double sq = std::max(0.0, acc2 - acc * acc / n);
      const double var = sq / n;
      mean[c] = static_cast<T>(m);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = count > 1 ? sq / (n - 1.0) : var;
      running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] + momentum * m);
      running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] + momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }

  const bool keep = grad_enabled() && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
  std::vector<T> xhat(keep ? x.numel() : 0);
  std::vector<T> out(x.numel());
  const T * gv = gamma.data();
  const T * bv = beta.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (b * C + c) * inner;
      const T m = mean[c], is = inv_std[c], ga = gv[c], be = bv[c];
      T * o = out.data() + off;
      const T * in = xv + off;
      if (keep) {
        T * h = xhat.data() + off;
        for (std::size_t i = 0; i < inner; ++i) {
          h[i] = (in[i] - m) * is;
          const T y = ga * h[i] + be;
          o[i] = detail::leaky_select(y, y, slope);
        }
      } else {
        for (std::size_t i = 0; i < inner; ++i) {
          const T y = ga * ((in[i] - m) * is) + be;
          o[i] = detail::leaky_select(y, y, slope);
        }
      }
    }
  }

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_result<T>(s, std::move(out), {x, gamma, beta},
    [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), mode, slope, B, C, inner, count](
      const std::vector<T> & g) {
      const auto & gamma_v = gn->value;
      const auto & beta_v = bn->value;
      // gradient w.r.t. the pre-activation is recomputed from xhat
      std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t off = (b * C + c) * inner;
          const T ga = gamma_v[c], be = beta_v[c];
          const T * h = xhat.data() + off;
          const T * gg = g.data() + off;
          constexpr std::size_t L = 16;
          T la[L] = {}, lx[L] = {};
          std::size_t i = 0;
          for (; i + L <= inner; i += L) {
            for (std::size_t j = 0; j < L; ++j) {
              const T gp = detail::leaky_select(ga * h[i + j] + be, gg[i + j], slope);
              la[j] += gp;
              lx[j] += gp * h[i + j];
            }
          }
          for (; i < inner; ++i) {
            const T gp = detail::leaky_select(ga * h[i] + be, gg[i], slope);
            la[0] += gp;
            lx[0] += gp * h[i];
          }
          double a = 0, ax = 0;
          for (std::size_t j = 0; j < L; ++j) {
            a += la[j];
            ax += lx[j];
          }
          sum_g[c] += a;
          sum_gx[c] += ax;
        }
      }
      if (gn->requires_grad) {
        auto & gr = gn->grad_buffer();
        for (std::size_t c = 0; c < C; ++c) {
          gr[c] += static_cast<T>(sum_gx[c]);
        }
      }
      if (bn->requires_grad) {
        auto & gr = bn->grad_buffer();
        for (std::size_t c = 0; c < C; ++c) {
          gr[c] += static_cast<T>(sum_g[c]);
        }
      }
      if (!xn->requires_grad) {
        return;
      }
      auto & gx = xn->grad_buffer();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t off = (b * C + c) * inner;
          const T ga = gamma_v[c], be = beta_v[c];
          const T k = ga * inv_std[c];
          const T * h = xhat.data() + off;
          const T * gg = g.data() + off;
          T * dst = gx.data() + off;
          if (mode == Mode::train) {
            const T mg = static_cast<T>(sum_g[c] / static_cast<double>(count));
            const T mgx = static_cast<T>(sum_gx[c] / static_cast<double>(count));
            for (std::size_t i = 0; i < inner; ++i) {
              const T gp = detail::leaky_select(ga * h[i] + be, gg[i], slope);
              dst[i] += k * (gp - mg - h[i] * mgx);
            }
          } else {
            for (std::size_t i = 0; i < inner; ++i) {
              const T gp = detail::leaky_select(ga * h[i] + be, gg[i], slope);
              dst[i] += k * gp;
            }
          }
        }
      }
    });
}

/// Plain batch normalization (no activation).
template<typename T>
Tensor<T> batch_norm(
  const Tensor<T> & x, const Tensor<T> & gamma, const Tensor<T> & beta,
  std::vector<T> & running_mean, std::vector<T> & running_var, Mode mode,
  T momentum = T(0.1), T eps = T(1e-5))
{
  return batch_norm_act(x, gamma, beta, running_mean, running_var, mode, T(1), momentum, eps);
}

}  // namespace rangeseg::ad

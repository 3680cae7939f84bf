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

namespace detail
{

/// Splits a shape around `axis` into (outer, axis length, inner).
inline void split_axis(const Shape & s, std::size_t axis, std::size_t & outer, std::size_t & len, std::size_t & inner)
{
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) {
    outer *= s[i];
  }
  for (std::size_t i = axis + 1; i < s.size(); ++i) {
    inner *= s[i];
  }
  len = s[axis];
}

inline void require_same_shape(const Shape & a, const Shape & b, const char * op)
{
  if (a != b) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " differ");
  }
}

}  // namespace detail

template<typename T>
Tensor<T> leaky_relu(const Tensor<T> & x, T slope)
{
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = detail::leaky_select(xv[i], xv[i], slope);
  }
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x},
    [xn, slope](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      const auto & v = xn->value;
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += detail::leaky_select(v[i], g[i], slope);
      }
    });
}

template<typename T>
Tensor<T> sigmoid(const Tensor<T> & x)
{
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  }
  auto xn = x.node();
  auto y = out;
  return make_result<T>(x.shape(), std::move(out), {x},
    [xn, y = std::move(y)](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * y[i] * (T(1) - y[i]);
      }
    });
}

/// Exponent-shifted softmax along `axis`.
template<typename T>
Tensor<T> softmax(const Tensor<T> & x, std::size_t axis)
{
  std::size_t outer, len, inner;
  detail::split_axis(x.shape(), axis, outer, len, inner);
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t a = 0; a < len; ++a) {
        mx = std::max(mx, xv[base + a * inner]);
      }
      T sum = 0;
      for (std::size_t a = 0; a < len; ++a) {
        const T e = std::exp(xv[base + a * inner] - mx);
        out[base + a * inner] = e;
        sum += e;
      }
      for (std::size_t a = 0; a < len; ++a) {
        out[base + a * inner] /= sum;
      }
    }
  }
  auto xn = x.node();
  auto y = out;
  return make_result<T>(x.shape(), std::move(out), {x},
    [xn, y = std::move(y), outer, len, inner](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * len * inner + i;
          T dot = 0;
          for (std::size_t a = 0; a < len; ++a) {
            dot += g[base + a * inner] * y[base + a * inner];
          }
          for (std::size_t a = 0; a < len; ++a) {
            const std::size_t k = base + a * inner;
            gx[k] += y[k] * (g[k] - dot);
          }
        }
      }
    });
}

template<typename T>
struct MaxPoolResult
{
  Tensor<T> values;
  std::vector<std::uint32_t> argmax;  ///< index along the pooled axis, lowest on ties
};

/// Max over one axis, which is removed from the output shape.
template<typename T>
MaxPoolResult<T> maxpool_axis(const Tensor<T> & x, std::size_t axis)
{
  std::size_t outer, len, inner;
  detail::split_axis(x.shape(), axis, outer, len, inner);
  if (len == 0) {
    throw ShapeError("maxpool over an empty axis");
  }
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto xv = x.values();
  std::vector<T> out(outer * inner);
  std::vector<std::uint32_t> arg(outer * inner, 0);
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * len * inner;
    T * orow = out.data() + o * inner;
    std::uint32_t * arow = arg.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) {
      orow[i] = xv[base + i];
    }
    for (std::size_t a = 1; a < len; ++a) {
      const T * src = xv.data() + base + a * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        if (src[i] > orow[i]) {
          orow[i] = src[i];
          arow[i] = static_cast<std::uint32_t>(a);
        }
      }
    }
  }
  auto xn = x.node();
  auto arg_copy = arg;
  Tensor<T> result = make_result<T>(std::move(out_shape), std::move(out), {x},
    [xn, arg = std::move(arg_copy), len, inner](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      for (std::size_t k = 0; k < g.size(); ++k) {
        const std::size_t o = k / inner;
        const std::size_t i = k % inner;
        gx[(o * len + arg[k]) * inner + i] += g[k];
      }
    });
  return {std::move(result), std::move(arg)};
}

template<typename T>
Tensor<T> add(const Tensor<T> & a, const Tensor<T> & b)
{
  detail::require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[i] + bv[i];
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {a, b},
    [an, bn](const std::vector<T> & g) {
      for (auto * n : {an.get(), bn.get()}) {
        if (n->requires_grad) {
          auto & gx = n->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += g[i];
          }
        }
      }
    });
}

template<typename T>
Tensor<T> mul(const Tensor<T> & a, const Tensor<T> & b)
{
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[i] * bv[i];
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {a, b},
    [an, bn](const std::vector<T> & g) {
      if (an->requires_grad) {
        auto & ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * bn->value[i];
        }
      }
      if (bn->requires_grad) {
        auto & gb = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          gb[i] += g[i] * an->value[i];
        }
      }
    });
}

template<typename T>
Tensor<T> scale(const Tensor<T> & x, T factor)
{
  std::vector<T> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xv[i] * factor;
  }
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x},
    [xn, factor](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * factor;
      }
    });
}

template<typename T>
Tensor<T> sum(const Tensor<T> & x)
{
  T s = 0;
  for (const T v : x.values()) {
    s += v;
  }
  auto xn = x.node();
  return make_result<T>(Shape{1}, std::vector<T>{s}, {x},
    [xn](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      for (auto & v : gx) {
        v += g[0];
      }
    });
}

/// Same values, new shape (copying; element order unchanged).
template<typename T>
Tensor<T> reshape(const Tensor<T> & x, Shape shape)
{
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  auto xn = x.node();
  return make_result<T>(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()), {x},
    [xn](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i];
      }
    });
}

/// Concatenation along axis 1 (channels) of tensors with equal other dims.
template<typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>> & parts)
{
  if (parts.empty()) {
    throw ShapeError("concat of zero tensors");
  }
  const Shape & ref = parts.front().shape();
  if (ref.size() < 2) {
    throw ShapeError("concat_channels needs rank >= 2, got " + shape_str(ref));
  }
  const std::size_t batch = ref[0];
  std::size_t inner = 1;
  for (std::size_t i = 2; i < ref.size(); ++i) {
    inner *= ref[i];
  }
  std::size_t total_c = 0;
  for (const auto & p : parts) {
    const Shape & s = p.shape();
    if (s.size() != ref.size() || s[0] != batch || shape_numel(s) != batch * s[1] * inner) {
      throw ShapeError("concat_channels: " + shape_str(s) + " incompatible with " + shape_str(ref));
    }
    total_c += s[1];
  }
  Shape out_shape = ref;
  out_shape[1] = total_c;
  std::vector<T> out(batch * total_c * inner);
  std::vector<std::size_t> offsets;
  std::size_t c0 = 0;
  for (const auto & p : parts) {
    offsets.push_back(c0);
    const std::size_t c = p.shape()[1];
    const auto v = p.values();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(v.data() + b * c * inner, c * inner, out.data() + (b * total_c + c0) * inner);
    }
    c0 += c;
  }

  std::vector<std::shared_ptr<detail::Node<T>>> nodes;
  for (const auto & p : parts) {
    nodes.push_back(p.node());
  }
  auto result = std::make_shared<detail::Node<T>>();
  result->shape = std::move(out_shape);
  result->value = std::move(out);
  bool needs = false;
  for (const auto & n : nodes) {
    needs = needs || n->requires_grad;
  }
  if (needs && grad_enabled()) {
    result->requires_grad = true;
    for (const auto & n : nodes) {
      if (n->requires_grad) {
        result->inputs.push_back(n);
      }
    }
    result->backward = [nodes, offsets, batch, total_c, inner](const std::vector<T> & g) {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto & n = nodes[k];
        if (!n->requires_grad) {
          continue;
        }
        const std::size_t c = n->shape[1];
        auto & gx = n->grad_buffer();
        for (std::size_t b = 0; b < batch; ++b) {
          const T * src = g.data() + (b * total_c + offsets[k]) * inner;
          T * dst = gx.data() + b * c * inner;
          for (std::size_t i = 0; i < c * inner; ++i) {
            dst[i] += src[i];
          }
        }
      }
    };
  }
  return Tensor<T>(std::move(result));
}

/// [B, C, ...] -> [B, C, 1, 1] spatial mean.
template<typename T>
Tensor<T> global_avg_pool(const Tensor<T> & x)
{
  const Shape & s = x.shape();
  if (s.size() < 2) {
    throw ShapeError("global_avg_pool needs rank >= 2, got " + shape_str(s));
  }
  const std::size_t bc = s[0] * s[1];
  const std::size_t inner = x.numel() / std::max<std::size_t>(bc, 1);
  if (inner == 0) {
    throw ShapeError("global_avg_pool over empty spatial extent");
  }
  std::vector<T> out(bc);
  const auto xv = x.values();
  for (std::size_t k = 0; k < bc; ++k) {
    T acc = 0;
    for (std::size_t i = 0; i < inner; ++i) {
      acc += xv[k * inner + i];
    }
    out[k] = acc / static_cast<T>(inner);
  }
  auto xn = x.node();
  return make_result<T>(Shape{s[0], s[1], 1, 1}, std::move(out), {x},
    [xn, inner](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      const T w = T(1) / static_cast<T>(inner);
      for (std::size_t k = 0; k < g.size(); ++k) {
        for (std::size_t i = 0; i < inner; ++i) {
          gx[k * inner + i] += g[k] * w;
        }
      }
    });
}

/// x[B, C, ...] * s[B, C, 1, 1], broadcasting s over the spatial dims.
template<typename T>
Tensor<T> mul_channelwise(const Tensor<T> & x, const Tensor<T> & s)
{
  const Shape & xs = x.shape();
  if (xs.size() < 2 || s.numel() != xs[0] * xs[1]) {
    throw ShapeError("mul_channelwise: " + shape_str(xs) + " vs " + shape_str(s.shape()));
  }
  const std::size_t bc = xs[0] * xs[1];
  const std::size_t inner = x.numel() / bc;
  std::vector<T> out(x.numel());
  const auto xv = x.values();
  const auto sv = s.values();
  for (std::size_t k = 0; k < bc; ++k) {
    for (std::size_t i = 0; i < inner; ++i) {
      out[k * inner + i] = xv[k * inner + i] * sv[k];
    }
  }
  auto xn = x.node();
  auto sn = s.node();
  return make_result<T>(xs, std::move(out), {x, s},
    [xn, sn, bc, inner](const std::vector<T> & g) {
      if (xn->requires_grad) {
        auto & gx = xn->grad_buffer();
        for (std::size_t k = 0; k < bc; ++k) {
          for (std::size_t i = 0; i < inner; ++i) {
            gx[k * inner + i] += g[k * inner + i] * sn->value[k];
          }
        }
      }
      if (sn->requires_grad) {
        auto & gs = sn->grad_buffer();
        for (std::size_t k = 0; k < bc; ++k) {
          T acc = 0;
          for (std::size_t i = 0; i < inner; ++i) {
            acc += g[k * inner + i] * xn->value[k * inner + i];
          }
          gs[k] += acc;
        }
      }
    });
}

/// y[b, c, p, j] = x[b, c, p, table[(b * P + p) * N + j]] for x of shape [B, C, P, N].
template<typename T>
Tensor<T> gather_last_axis(const Tensor<T> & x, std::vector<std::int32_t> table)
{
  const Shape & s = x.shape();
  if (s.size() != 4 || table.size() != s[0] * s[2] * s[3]) {
    throw ShapeError("gather_last_axis: table size does not match " + shape_str(s));
  }
  const std::size_t B = s[0], C = s[1], P = s[2], N = s[3];
  std::vector<T> out(x.numel());
  const auto xv = x.values();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t row = ((b * C + c) * P + p) * N;
        const std::int32_t * t = table.data() + (b * P + p) * N;
        for (std::size_t j = 0; j < N; ++j) {
          out[row + j] = xv[row + static_cast<std::size_t>(t[j])];
        }
      }
    }
  }
  auto xn = x.node();
  return make_result<T>(s, std::move(out), {x},
    [xn, table = std::move(table), B, C, P, N](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t p = 0; p < P; ++p) {
            const std::size_t row = ((b * C + c) * P + p) * N;
            const std::int32_t * t = table.data() + (b * P + p) * N;
            for (std::size_t j = 0; j < N; ++j) {
              gx[row + static_cast<std::size_t>(t[j])] += g[row + j];
            }
          }
        }
      }
    });
}

/// Sliding 3x3 neighbourhoods on a grid: [B, C, H, W] -> [B, C, H*W, 9], with
/// stride 1, the given dilation and zero padding (the width axis may wrap
/// instead). Slots are row-major over the offsets {-d, 0, d} x {-d, 0, d}.
template<typename T>
Tensor<T> unfold3x3(const Tensor<T> & x, int dilation, bool circular_width = false)
{
  const Shape & s = x.shape();
  if (s.size() != 4) {
    throw ShapeError("unfold3x3 expects [B, C, H, W], got " + shape_str(s));
  }
  const std::size_t B = s[0], C = s[1];
  const int H = static_cast<int>(s[2]), W = static_cast<int>(s[3]);
  const std::size_t HW = static_cast<std::size_t>(H) * W;
  // source index per (position, slot), -1 for padding
  std::vector<std::int64_t> src(HW * 9);
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      for (int j = 0; j < 9; ++j) {
        const int vv = v + (j / 3 - 1) * dilation;
        int uu = u + (j % 3 - 1) * dilation;
        if (circular_width) {
          uu = ((uu % W) + W) % W;
        }
        src[(static_cast<std::size_t>(v) * W + u) * 9 + j] =
          (vv < 0 || vv >= H || uu < 0 || uu >= W) ? -1 : static_cast<std::int64_t>(vv) * W + uu;
      }
    }
  }
  std::vector<T> out(B * C * HW * 9, T(0));
  const auto xv = x.values();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T * in = xv.data() + bc * HW;
    T * o = out.data() + bc * HW * 9;
    for (std::size_t k = 0; k < HW * 9; ++k) {
      if (src[k] >= 0) {
        o[k] = in[src[k]];
      }
    }
  }
  auto xn = x.node();
  return make_result<T>(Shape{B, C, HW, 9}, std::move(out), {x},
    [xn, src = std::move(src), B, C, HW](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      for (std::size_t bc = 0; bc < B * C; ++bc) {
        T * gi = gx.data() + bc * HW;
        const T * go = g.data() + bc * HW * 9;
        for (std::size_t k = 0; k < HW * 9; ++k) {
          if (src[k] >= 0) {
            gi[src[k]] += go[k];
          }
        }
      }
    });
}

/// Bilinear x2 upsampling, half-pixel centres (align_corners = false), border
/// clamp. With `circular_width` the width axis interpolates across the seam.
template<typename T>
Tensor<T> bilinear_upsample2x(const Tensor<T> & x, bool circular_width = false)
{
  const Shape & s = x.shape();
  if (s.size() != 4 || s[2] == 0 || s[3] == 0) {
    throw ShapeError("bilinear_upsample2x expects non-empty [B, C, H, W], got " + shape_str(s));
  }
  const std::size_t BC = s[0] * s[1];
  const std::size_t H = s[2], W = s[3], OH = 2 * H, OW = 2 * W;

  struct Tap
  {
    std::size_t i0, i1;
    T w1;
  };
  auto taps = [](std::size_t out_len, std::size_t in_len, bool wrap) {
      std::vector<Tap> t(out_len);
      for (std::size_t o = 0; o < out_len; ++o) {
        T src = (static_cast<T>(o) + T(0.5)) / T(2) - T(0.5);
        if (wrap) {
          const T fl = std::floor(src);
          const auto n = static_cast<long>(in_len);
          const long i0 = ((static_cast<long>(fl) % n) + n) % n;
          t[o] = Tap{static_cast<std::size_t>(i0), static_cast<std::size_t>((i0 + 1) % n), src - fl};
          continue;
        }
        if (src < T(0)) {
          src = T(0);
        }
        std::size_t i0 = static_cast<std::size_t>(src);
        if (i0 > in_len - 1) {
          i0 = in_len - 1;
        }
        const std::size_t i1 = std::min(i0 + 1, in_len - 1);
        t[o] = Tap{i0, i1, src - static_cast<T>(i0)};
      }
      return t;
    };
  auto ty = taps(OH, H, false);
  auto tx = taps(OW, W, circular_width);

  std::vector<T> out(BC * OH * OW);
  const auto xv = x.values();
  for (std::size_t k = 0; k < BC; ++k) {
    const T * in = xv.data() + k * H * W;
    T * o = out.data() + k * OH * OW;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      const Tap & a = ty[oy];
      const T * r0 = in + a.i0 * W;
      const T * r1 = in + a.i1 * W;
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const Tap & b = tx[ox];
        const T top = r0[b.i0] + b.w1 * (r0[b.i1] - r0[b.i0]);
        const T bot = r1[b.i0] + b.w1 * (r1[b.i1] - r1[b.i0]);
        o[oy * OW + ox] = top + a.w1 * (bot - top);
      }
    }
  }
  auto xn = x.node();
  return make_result<T>(Shape{s[0], s[1], OH, OW}, std::move(out), {x},
    [xn, ty = std::move(ty), tx = std::move(tx), BC, H, W, OH, OW](const std::vector<T> & g) {
      auto & gx = xn->grad_buffer();
      for (std::size_t k = 0; k < BC; ++k) {
        T * gi = gx.data() + k * H * W;
        const T * go = g.data() + k * OH * OW;
        for (std::size_t oy = 0; oy < OH; ++oy) {
          const Tap & a = ty[oy];
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const Tap & b = tx[ox];
            const T gv = go[oy * OW + ox];
            const T wy0 = T(1) - a.w1, wx0 = T(1) - b.w1;
            gi[a.i0 * W + b.i0] += gv * wy0 * wx0;
            gi[a.i0 * W + b.i1] += gv * wy0 * b.w1;
            gi[a.i1 * W + b.i0] += gv * a.w1 * wx0;
            gi[a.i1 * W + b.i1] += gv * a.w1 * b.w1;
          }
        }
      }
    });
}

}  // namespace rangeseg::ad

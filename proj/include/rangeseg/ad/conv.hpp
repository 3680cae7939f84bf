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

// 2D cross-correlation over NCHW tensors with stride, dilation, zero padding
// (optionally circular along the width axis) and channel groups.
//
// Dense and grouped convolutions lower to im2col + GEMM; the depthwise case
// (one input and one output channel per group) runs as direct loops.

#include <Eigen/Core>

#include <array>
#include <string>
#include <vector>

#include "rangeseg/ad/tensor.hpp"

namespace rangeseg::ad
{

struct Conv2dOptions
{
  std::array<int, 2> stride{1, 1};     ///< (rows, cols)
  std::array<int, 2> dilation{1, 1};
  std::array<int, 2> padding{0, 0};
  int groups = 1;
  bool circular_width = false;  ///< wrap the width axis instead of zero padding
};

namespace detail
{

/// Contiguous run of output columns whose input columns advance by `step`.
struct ColumnRun
{
  int out_begin;
  int out_end;
  int in_begin;
};

/// Runs for one kernel column: output column ow reads input column
/// ow * stride - pad + kw * dilation (wrapped or dropped when outside).
inline std::vector<ColumnRun> column_runs(int out_w, int in_w, int stride, int pad, int offset, bool circular)
{
  std::vector<ColumnRun> runs;
  int ow = 0;
  while (ow < out_w) {
    int iw = ow * stride - pad + offset;
    if (circular) {
      iw = ((iw % in_w) + in_w) % in_w;
    } else if (iw < 0 || iw >= in_w) {
      ++ow;
      continue;
    }
    ColumnRun run{ow, ow + 1, iw};
    int expected = iw + stride;
    ++ow;
    while (ow < out_w) {
      int next = ow * stride - pad + offset;
      if (circular) {
        next = ((next % in_w) + in_w) % in_w;
      }
      if (next != expected || next < 0 || next >= in_w) {
        break;
      }
      run.out_end = ++ow;
      expected += stride;
    }
    runs.push_back(run);
  }
  return runs;
}

struct ConvGeometry
{
  int batch, in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int k_h, k_w;
  int groups;
  Conv2dOptions opt;
  std::vector<std::vector<ColumnRun>> runs;  ///< per kernel column

  int row_source(int oh, int kh) const
  {
    const int ih = oh * opt.stride[0] - opt.padding[0] + kh * opt.dilation[0];
    return (ih < 0 || ih >= in_h) ? -1 : ih;
  }
};

inline ConvGeometry conv_geometry(const Shape & in, const Shape & w, const Conv2dOptions & opt)
{
  if (in.size() != 4 || w.size() != 4) {
    throw ShapeError("conv2d expects input [B,C,H,W] and weight [O,C/g,kh,kw]; got " + shape_str(in) +
                     " and " + shape_str(w));
  }
  ConvGeometry g{};
  g.batch = static_cast<int>(in[0]);
  g.in_c = static_cast<int>(in[1]);
  g.in_h = static_cast<int>(in[2]);
  g.in_w = static_cast<int>(in[3]);
  g.out_c = static_cast<int>(w[0]);
  g.k_h = static_cast<int>(w[2]);
  g.k_w = static_cast<int>(w[3]);
  g.groups = opt.groups;
  g.opt = opt;
  if (opt.groups < 1 || g.in_c % opt.groups != 0 || g.out_c % opt.groups != 0 ||
    static_cast<int>(w[1]) * opt.groups != g.in_c)
  {
    throw ShapeError("conv2d: input " + shape_str(in) + " and weight " + shape_str(w) +
                     " are inconsistent with groups=" + std::to_string(opt.groups));
  }
  if (opt.stride[0] < 1 || opt.stride[1] < 1 || opt.dilation[0] < 1 || opt.dilation[1] < 1 ||
    opt.padding[0] < 0 || opt.padding[1] < 0)
  {
    throw ShapeError("conv2d: stride/dilation must be >= 1 and padding >= 0");
  }
  const int eff_h = opt.dilation[0] * (g.k_h - 1) + 1;
  const int eff_w = opt.dilation[1] * (g.k_w - 1) + 1;
  const int span_h = g.in_h + 2 * opt.padding[0] - eff_h;
  const int span_w = g.in_w + 2 * opt.padding[1] - eff_w;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d: kernel " + shape_str(w) + " does not fit padded input " + shape_str(in));
  }
  g.out_h = span_h / opt.stride[0] + 1;
  g.out_w = span_w / opt.stride[1] + 1;
  g.runs.resize(static_cast<std::size_t>(g.k_w));
  for (int kw = 0; kw < g.k_w; ++kw) {
    g.runs[kw] = column_runs(g.out_w, g.in_w, opt.stride[1], opt.padding[1], kw * opt.dilation[1],
        opt.circular_width);
  }
  return g;
}

template<typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Fills col[(c * kh + i) * kw + j][oh * OW + ow] for channels [c0, c0 + nc).
template<typename T>
void im2col(const ConvGeometry & g, const T * in, int c0, int nc, T * col)
{
  const std::size_t cols = static_cast<std::size_t>(g.out_h) * g.out_w;
  std::fill(col, col + static_cast<std::size_t>(nc) * g.k_h * g.k_w * cols, T(0));
  const int sw = g.opt.stride[1];
  for (int c = 0; c < nc; ++c) {
    const T * plane = in + static_cast<std::size_t>(c0 + c) * g.in_h * g.in_w;
    for (int kh = 0; kh < g.k_h; ++kh) {
      for (int kw = 0; kw < g.k_w; ++kw) {
        T * row = col + (static_cast<std::size_t>(c * g.k_h + kh) * g.k_w + kw) * cols;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = g.row_source(oh, kh);
          if (ih < 0) {
            continue;
          }
          const T * src = plane + static_cast<std::size_t>(ih) * g.in_w;
          T * dst = row + static_cast<std::size_t>(oh) * g.out_w;
          for (const ColumnRun & r : g.runs[kw]) {
            for (int ow = r.out_begin, iw = r.in_begin; ow < r.out_end; ++ow, iw += sw) {
              dst[ow] = src[iw];
            }
          }
        }
      }
    }
  }
}

template<typename T>
void col2im_add(const ConvGeometry & g, const T * col, int c0, int nc, T * in_grad)
{
  const std::size_t cols = static_cast<std::size_t>(g.out_h) * g.out_w;
  const int sw = g.opt.stride[1];
  for (int c = 0; c < nc; ++c) {
    T * plane = in_grad + static_cast<std::size_t>(c0 + c) * g.in_h * g.in_w;
    for (int kh = 0; kh < g.k_h; ++kh) {
      for (int kw = 0; kw < g.k_w; ++kw) {
        const T * row = col + (static_cast<std::size_t>(c * g.k_h + kh) * g.k_w + kw) * cols;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = g.row_source(oh, kh);
          if (ih < 0) {
            continue;
          }
          T * dst = plane + static_cast<std::size_t>(ih) * g.in_w;
          const T * src = row + static_cast<std::size_t>(oh) * g.out_w;
          for (const ColumnRun & r : g.runs[kw]) {
            for (int ow = r.out_begin, iw = r.in_begin; ow < r.out_end; ++ow, iw += sw) {
              dst[iw] += src[ow];
            }
          }
        }
      }
    }
  }
}

template<typename T>
bool is_pointwise(const ConvGeometry & g)
{
  return g.k_h == 1 && g.k_w == 1 && g.opt.stride[0] == 1 && g.opt.stride[1] == 1 &&
         g.opt.padding[0] == 0 && g.opt.padding[1] == 0;
}

template<typename T>
void depthwise_forward(const ConvGeometry & g, const T * in, const T * w, T * out)
{
  const int sw = g.opt.stride[1];
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int b = 0; b < g.batch; ++b) {
    for (int c = 0; c < g.in_c; ++c) {
      const T * src_plane = in + (static_cast<std::size_t>(b) * g.in_c + c) * in_plane;
      T * dst_plane = out + (static_cast<std::size_t>(b) * g.out_c + c) * out_plane;
      const T * wc = w + static_cast<std::size_t>(c) * g.k_h * g.k_w;
      for (int kh = 0; kh < g.k_h; ++kh) {
        for (int kw = 0; kw < g.k_w; ++kw) {
          const T wv = wc[kh * g.k_w + kw];
          for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih = g.row_source(oh, kh);
            if (ih < 0) {
              continue;
            }
            const T * src = src_plane + static_cast<std::size_t>(ih) * g.in_w;
            T * dst = dst_plane + static_cast<std::size_t>(oh) * g.out_w;
            for (const ColumnRun & r : g.runs[kw]) {
              if (sw == 1) {
                const T * s = src + r.in_begin - r.out_begin;
                for (int ow = r.out_begin; ow < r.out_end; ++ow) {
                  dst[ow] += wv * s[ow];
                }
              } else {
                for (int ow = r.out_begin, iw = r.in_begin; ow < r.out_end; ++ow, iw += sw) {
                  dst[ow] += wv * src[iw];
                }
              }
            }
          }
        }
      }
    }
  }
}

template<typename T>
void depthwise_backward(
  const ConvGeometry & g, const T * in, const T * w, const T * gout, T * gin, T * gw)
{
  const int sw = g.opt.stride[1];
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int b = 0; b < g.batch; ++b) {
    for (int c = 0; c < g.in_c; ++c) {
      const T * src_plane = in + (static_cast<std::size_t>(b) * g.in_c + c) * in_plane;
      T * gin_plane = gin ? gin + (static_cast<std::size_t>(b) * g.in_c + c) * in_plane : nullptr;
      const T * go_plane = gout + (static_cast<std::size_t>(b) * g.out_c + c) * out_plane;
      const T * wc = w + static_cast<std::size_t>(c) * g.k_h * g.k_w;
      T * gwc = gw ? gw + static_cast<std::size_t>(c) * g.k_h * g.k_w : nullptr;
      for (int kh = 0; kh < g.k_h; ++kh) {
        for (int kw = 0; kw < g.k_w; ++kw) {
          const T wv = wc[kh * g.k_w + kw];
          T acc = 0;
          for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih = g.row_source(oh, kh);
            if (ih < 0) {
              continue;
            }
            const T * src = src_plane + static_cast<std::size_t>(ih) * g.in_w;
            const T * go = go_plane + static_cast<std::size_t>(oh) * g.out_w;
            T * gi = gin_plane ? gin_plane + static_cast<std::size_t>(ih) * g.in_w : nullptr;
            for (const ColumnRun & r : g.runs[kw]) {
              if (sw == 1) {
                // contiguous run: lane sums keep the reduction vectorizable
                const int n = r.out_end - r.out_begin;
                const T * gr = go + r.out_begin;
                const T * sr = src + r.in_begin;
                constexpr int L = 16;
                T lanes[L] = {};
                int i = 0;
                for (; i + L <= n; i += L) {
                  for (int j = 0; j < L; ++j) {
                    lanes[j] += gr[i + j] * sr[i + j];
                  }
                }
                for (; i < n; ++i) {
                  lanes[0] += gr[i] * sr[i];
                }
                for (int j = 0; j < L; ++j) {
                  acc += lanes[j];
                }
                if (gi) {
                  T * gir = gi + r.in_begin;
                  for (int k = 0; k < n; ++k) {
                    gir[k] += wv * gr[k];
                  }
                }
                continue;
              }
              for (int ow = r.out_begin, iw = r.in_begin; ow < r.out_end; ++ow, iw += sw) {
                acc += go[ow] * src[iw];
                if (gi) {
                  gi[iw] += wv * go[ow];
                }
              }
            }
          }
          if (gwc) {
            gwc[kh * g.k_w + kw] += acc;
          }
        }
      }
    }
  }
}

/// out[oh, ow] += src[ih, iw] over the taps of kernel position (kh, kw).
template<typename T>
void tap_gather_add(const ConvGeometry & g, int kh, int kw, const T * src_plane, T * out_plane)
{
  const int sw = g.opt.stride[1];
  for (int oh = 0; oh < g.out_h; ++oh) {
    const int ih = g.row_source(oh, kh);
    if (ih < 0) {
      continue;
    }
    const T * src = src_plane + static_cast<std::size_t>(ih) * g.in_w;
    T * dst = out_plane + static_cast<std::size_t>(oh) * g.out_w;
    for (const ColumnRun & r : g.runs[kw]) {
      for (int ow = r.out_begin, iw = r.in_begin; ow < r.out_end; ++ow, iw += sw) {
        dst[ow] += src[iw];
      }
    }
  }
}

/// Adjoint of tap_gather_add: src_grad[ih, iw] += out_grad[oh, ow].
template<typename T>
void tap_scatter_add(const ConvGeometry & g, int kh, int kw, const T * out_grad, T * src_grad)
{
  const int sw = g.opt.stride[1];
  for (int oh = 0; oh < g.out_h; ++oh) {
    const int ih = g.row_source(oh, kh);
    if (ih < 0) {
      continue;
    }
    T * dst = src_grad + static_cast<std::size_t>(ih) * g.in_w;
    const T * src = out_grad + static_cast<std::size_t>(oh) * g.out_w;
    for (const ColumnRun & r : g.runs[kw]) {
      for (int ow = r.out_begin, iw = r.in_begin; ow < r.out_end; ++ow, iw += sw) {
        dst[iw] += src[ow];
      }
    }
  }
}

/// Weight [O, C, kh, kw] rearranged to rows (tap * O + o), columns c.
template<typename T>
std::vector<T> tap_major_weight(const ConvGeometry & g, const T * w)
{
  const int taps = g.k_h * g.k_w;
  std::vector<T> wt(static_cast<std::size_t>(taps) * g.out_c * g.in_c);
  for (int o = 0; o < g.out_c; ++o) {
    for (int c = 0; c < g.in_c; ++c) {
      for (int t = 0; t < taps; ++t) {
        wt[(static_cast<std::size_t>(t) * g.out_c + o) * g.in_c + c] =
          w[(static_cast<std::size_t>(o) * g.in_c + c) * taps + t];
      }
    }
  }
  return wt;
}

}  // namespace detail

/// Cross-correlation. `bias` may be an undefined tensor.
template<typename T>
Tensor<T> conv2d(
  const Tensor<T> & input, const Tensor<T> & weight, const Tensor<T> & bias,
  const Conv2dOptions & opt = {})
{
  using detail::RowMat;
  auto geo = detail::conv_geometry(input.shape(), weight.shape(), opt);
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(geo.out_c)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const int G = geo.groups;
  const int cin_g = geo.in_c / G;
  const int cout_g = geo.out_c / G;
  const int K = cin_g * geo.k_h * geo.k_w;
  const std::size_t in_plane = static_cast<std::size_t>(geo.in_h) * geo.in_w;
  const std::size_t cols = static_cast<std::size_t>(geo.out_h) * geo.out_w;
  const bool depthwise = cin_g == 1 && cout_g == 1;
  const bool pointwise = detail::is_pointwise<T>(geo);
  // Few output channels: multiply first, then shift-accumulate per tap. Avoids
  // materializing the (in_c * taps) x cols column matrix.
  const bool tap_major = !depthwise && !pointwise && G == 1 && geo.out_c < geo.in_c;
  const int taps = geo.k_h * geo.k_w;

  std::vector<T> out(static_cast<std::size_t>(geo.batch) * geo.out_c * cols, T(0));
  const T * x = input.data();
  const T * w = weight.data();
  if (depthwise) {
    detail::depthwise_forward(geo, x, w, out.data());
  } else if (tap_major) {
    const auto wt = detail::tap_major_weight(geo, w);
    Eigen::Map<const RowMat<T>> wm(wt.data(), taps * geo.out_c, geo.in_c);
    RowMat<T> z(taps * geo.out_c, static_cast<Eigen::Index>(in_plane));
    for (int b = 0; b < geo.batch; ++b) {
      Eigen::Map<const RowMat<T>> xm(x + static_cast<std::size_t>(b) * geo.in_c * in_plane, geo.in_c,
        static_cast<Eigen::Index>(in_plane));
      z.noalias() = wm * xm;
      for (int t = 0; t < taps; ++t) {
        for (int o = 0; o < geo.out_c; ++o) {
          detail::tap_gather_add(geo, t / geo.k_w, t % geo.k_w, z.data() + (static_cast<std::size_t>(t) * geo.out_c + o) * in_plane,
            out.data() + (static_cast<std::size_t>(b) * geo.out_c + o) * cols);
        }
      }
    }
  } else {
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(K) * cols);
    for (int b = 0; b < geo.batch; ++b) {
      const T * xb = x + static_cast<std::size_t>(b) * geo.in_c * in_plane;
      for (int gi = 0; gi < G; ++gi) {
        const T * colp;
        if (pointwise) {
          colp = xb + static_cast<std::size_t>(gi) * cin_g * in_plane;
        } else {
          detail::im2col(geo, xb, gi * cin_g, cin_g, col.data());
          colp = col.data();
        }
        Eigen::Map<const RowMat<T>> wm(w + static_cast<std::size_t>(gi) * cout_g * K, cout_g, K);
        Eigen::Map<const RowMat<T>> cm(colp, K, static_cast<Eigen::Index>(cols));
        Eigen::Map<RowMat<T>> om(out.data() + (static_cast<std::size_t>(b) * geo.out_c + gi * cout_g) * cols,
          cout_g, static_cast<Eigen::Index>(cols));
        om.noalias() = wm * cm;
      }
    }
  }
  if (bias.defined()) {
    const T * bv = bias.data();
    for (int b = 0; b < geo.batch; ++b) {
      for (int o = 0; o < geo.out_c; ++o) {
        T * row = out.data() + (static_cast<std::size_t>(b) * geo.out_c + o) * cols;
        for (std::size_t i = 0; i < cols; ++i) {
          row[i] += bv[o];
        }
      }
    }
  }

  Shape out_shape{static_cast<std::size_t>(geo.batch), static_cast<std::size_t>(geo.out_c),
    static_cast<std::size_t>(geo.out_h), static_cast<std::size_t>(geo.out_w)};
  auto xn = input.node();
  auto wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return make_result<T>(std::move(out_shape), std::move(out), {input, weight, bias},
    [xn, wn, bn, geo = std::move(geo), depthwise, pointwise, tap_major, taps, G, cin_g, cout_g, K, in_plane, cols](
      const std::vector<T> & g) {
      if (bn && bn->requires_grad) {
        auto & gb = bn->grad_buffer();
        for (int b = 0; b < geo.batch; ++b) {
          for (int o = 0; o < geo.out_c; ++o) {
            const T * row = g.data() + (static_cast<std::size_t>(b) * geo.out_c + o) * cols;
            T acc = 0;
            for (std::size_t i = 0; i < cols; ++i) {
              acc += row[i];
            }
            gb[o] += acc;
          }
        }
      }
      const bool need_x = xn->requires_grad;
      const bool need_w = wn->requires_grad;
      if (!need_x && !need_w) {
        return;
      }
      T * gx = need_x ? xn->grad_buffer().data() : nullptr;
      T * gw = need_w ? wn->grad_buffer().data() : nullptr;
      const T * x = xn->value.data();
      const T * w = wn->value.data();
      if (depthwise) {
        detail::depthwise_backward(geo, x, w, g.data(), gx, gw);
        return;
      }
      if (tap_major) {
        const int rows = taps * geo.out_c;
        const auto wt = detail::tap_major_weight(geo, w);
        Eigen::Map<const RowMat<T>> wm(wt.data(), rows, geo.in_c);
        RowMat<T> dz(rows, static_cast<Eigen::Index>(in_plane));
        RowMat<T> dwt = RowMat<T>::Zero(rows, geo.in_c);
        for (int b = 0; b < geo.batch; ++b) {
          dz.setZero();
          for (int t = 0; t < taps; ++t) {
            for (int o = 0; o < geo.out_c; ++o) {
              detail::tap_scatter_add(geo, t / geo.k_w, t % geo.k_w,
                g.data() + (static_cast<std::size_t>(b) * geo.out_c + o) * cols,
                dz.data() + (static_cast<std::size_t>(t) * geo.out_c + o) * in_plane);
            }
          }
          Eigen::Map<const RowMat<T>> xm(x + static_cast<std::size_t>(b) * geo.in_c * in_plane, geo.in_c,
            static_cast<Eigen::Index>(in_plane));
          if (need_w) {
            dwt.noalias() += dz * xm.transpose();
          }
          if (need_x) {
            Eigen::Map<RowMat<T>> gxm(gx + static_cast<std::size_t>(b) * geo.in_c * in_plane, geo.in_c,
              static_cast<Eigen::Index>(in_plane));
            gxm.noalias() += wm.transpose() * dz;
          }
        }
        if (need_w) {
          for (int o = 0; o < geo.out_c; ++o) {
            for (int c = 0; c < geo.in_c; ++c) {
              for (int t = 0; t < taps; ++t) {
                gw[(static_cast<std::size_t>(o) * geo.in_c + c) * taps + t] += dwt(t * geo.out_c + o, c);
              }
            }
          }
        }
        return;
      }
      std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(K) * cols);
      std::vector<T> dcol(need_x && !pointwise ? static_cast<std::size_t>(K) * cols : 0);
      for (int b = 0; b < geo.batch; ++b) {
        const T * xb = x + static_cast<std::size_t>(b) * geo.in_c * in_plane;
        for (int gi = 0; gi < G; ++gi) {
          Eigen::Map<const RowMat<T>> gm(g.data() + (static_cast<std::size_t>(b) * geo.out_c + gi * cout_g) * cols,
            cout_g, static_cast<Eigen::Index>(cols));
          if (need_w) {
            const T * colp;
            if (pointwise) {
              colp = xb + static_cast<std::size_t>(gi) * cin_g * in_plane;
            } else {
              detail::im2col(geo, xb, gi * cin_g, cin_g, col.data());
              colp = col.data();
            }
            Eigen::Map<const RowMat<T>> cm(colp, K, static_cast<Eigen::Index>(cols));
            Eigen::Map<RowMat<T>> gwm(gw + static_cast<std::size_t>(gi) * cout_g * K, cout_g, K);
            gwm.noalias() += gm * cm.transpose();
          }
          if (need_x) {
            Eigen::Map<const RowMat<T>> wm(w + static_cast<std::size_t>(gi) * cout_g * K, cout_g, K);
            if (pointwise) {
              Eigen::Map<RowMat<T>> gxm(gx + (static_cast<std::size_t>(b) * geo.in_c + gi * cin_g) * in_plane,
                K, static_cast<Eigen::Index>(cols));
              gxm.noalias() += wm.transpose() * gm;
            } else {
              Eigen::Map<RowMat<T>> dm(dcol.data(), K, static_cast<Eigen::Index>(cols));
              dm.noalias() = wm.transpose() * gm;
              detail::col2im_add(geo, dcol.data(), gi * cin_g, cin_g,
                gx + static_cast<std::size_t>(b) * geo.in_c * in_plane);
            }
          }
        }
      }
    });
}

}  // namespace rangeseg::ad

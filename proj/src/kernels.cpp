//------------------------------------------------------------------------------
//
//   Copyright 2026 The latent-replay authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------

#include "latent_replay/kernels.hpp"

#include "latent_replay/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lr {
namespace {

inline double Dot(float const *a, float const *b, std::size_t n)
{
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
  {
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return s;
}

struct ConvDims
{
  std::size_t n, c, h, w;
  std::size_t f, cg, kh, kw;
  std::size_t groups, fg;
  std::size_t oh, ow;
  std::size_t patch;  // cg * kh * kw
};

ConvDims CheckConv(Shape const &xs, Shape const &ks, ConvGeometry geo)
{
  Require(xs.size() == 4, ErrorCode::kShape, "conv2d input must be [n,c,h,w], got " + ShapeString(xs));
  Require(ks.size() == 4, ErrorCode::kShape,
          "conv2d kernel must be [f,c/g,kh,kw], got " + ShapeString(ks));
  Require(geo.stride >= 1, ErrorCode::kShape, "conv2d stride must be >= 1");
  Require(geo.groups >= 1, ErrorCode::kShape, "conv2d groups must be >= 1");
  ConvDims d{};
  d.n      = xs[0];
  d.c      = xs[1];
  d.h      = xs[2];
  d.w      = xs[3];
  d.f      = ks[0];
  d.cg     = ks[1];
  d.kh     = ks[2];
  d.kw     = ks[3];
  d.groups = geo.groups;
  Require(d.c % d.groups == 0 && d.f % d.groups == 0, ErrorCode::kShape,
          "groups must divide both input and output channels");
  Require(d.c / d.groups == d.cg, ErrorCode::kShape,
          "kernel channel extent " + std::to_string(d.cg) + " != c/groups = " +
              std::to_string(d.c / d.groups));
  d.fg    = d.f / d.groups;
  d.oh    = ConvOutExtent(d.h, d.kh, geo.stride, geo.pad);
  d.ow    = ConvOutExtent(d.w, d.kw, geo.stride, geo.pad);
  d.patch = d.cg * d.kh * d.kw;
  return d;
}

// Column matrix [oh*ow, cg*kh*kw] for one image and one group.
void Im2Col(float const *img, ConvDims const &d, ConvGeometry geo, std::size_t group,
            std::vector<float> &col)
{
  col.assign(d.oh * d.ow * d.patch, 0.0f);
  auto const pad = static_cast<std::ptrdiff_t>(geo.pad);
  for (std::size_t oy = 0; oy < d.oh; ++oy)
  {
    for (std::size_t ox = 0; ox < d.ow; ++ox)
    {
      float *dst = col.data() + (oy * d.ow + ox) * d.patch;
      for (std::size_t ci = 0; ci < d.cg; ++ci)
      {
        float const *chan = img + (group * d.cg + ci) * d.h * d.w;
        for (std::size_t ky = 0; ky < d.kh; ++ky)
        {
          auto iy = static_cast<std::ptrdiff_t>(oy * geo.stride + ky) - pad;
          for (std::size_t kx = 0; kx < d.kw; ++kx)
          {
            auto  ix = static_cast<std::ptrdiff_t>(ox * geo.stride + kx) - pad;
            float v  = 0.0f;
            if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(d.h) &&
                ix < static_cast<std::ptrdiff_t>(d.w))
            {
              v = chan[static_cast<std::size_t>(iy) * d.w + static_cast<std::size_t>(ix)];
            }
            *dst++ = v;
          }
        }
      }
    }
  }
}

void Col2ImAdd(std::vector<double> const &dcol, ConvDims const &d, ConvGeometry geo,
               std::size_t group, double *img)
{
  auto const pad = static_cast<std::ptrdiff_t>(geo.pad);
  for (std::size_t oy = 0; oy < d.oh; ++oy)
  {
    for (std::size_t ox = 0; ox < d.ow; ++ox)
    {
      double const *src = dcol.data() + (oy * d.ow + ox) * d.patch;
      for (std::size_t ci = 0; ci < d.cg; ++ci)
      {
        double *chan = img + (group * d.cg + ci) * d.h * d.w;
        for (std::size_t ky = 0; ky < d.kh; ++ky)
        {
          auto iy = static_cast<std::ptrdiff_t>(oy * geo.stride + ky) - pad;
          for (std::size_t kx = 0; kx < d.kw; ++kx, ++src)
          {
            auto ix = static_cast<std::ptrdiff_t>(ox * geo.stride + kx) - pad;
            if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(d.h) &&
                ix < static_cast<std::ptrdiff_t>(d.w))
            {
              chan[static_cast<std::size_t>(iy) * d.w + static_cast<std::size_t>(ix)] += *src;
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor MatMul(Tensor const &a, Tensor const &b)
{
  Require(a.rank() == 2 && b.rank() == 2, ErrorCode::kShape, "matmul expects rank-2 operands");
  Require(a.dim(1) == b.dim(0), ErrorCode::kShape,
          "matmul inner extents differ: " + ShapeString(a.shape()) + " x " + ShapeString(b.shape()));
  std::size_t const m = a.dim(0), k = a.dim(1), n = b.dim(1);
  // Transpose b once so every output is a contiguous dot product.
  std::vector<float> bt(k * n);
  for (std::size_t i = 0; i < k; ++i)
  {
    for (std::size_t j = 0; j < n; ++j)
    {
      bt[j * k + i] = b[i * n + j];
    }
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
  {
    for (std::size_t j = 0; j < n; ++j)
    {
      out[i * n + j] = static_cast<float>(Dot(a.data().data() + i * k, bt.data() + j * k, k));
    }
  }
  return out;
}

Tensor MatMulTransB(Tensor const &a, Tensor const &b)
{
  Require(a.rank() == 2 && b.rank() == 2, ErrorCode::kShape, "matmul expects rank-2 operands");
  Require(a.dim(1) == b.dim(1), ErrorCode::kShape,
          "matmul inner extents differ: " + ShapeString(a.shape()) + " x " + ShapeString(b.shape()) +
              "^T");
  std::size_t const m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor            out({m, n});
  for (std::size_t i = 0; i < m; ++i)
  {
    for (std::size_t j = 0; j < n; ++j)
    {
      out[i * n + j] = static_cast<float>(Dot(a.data().data() + i * k, b.data().data() + j * k, k));
    }
  }
  return out;
}

std::size_t ConvOutExtent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad)
{
  Require(stride >= 1, ErrorCode::kShape, "stride must be >= 1");
  std::size_t const padded = in + 2 * pad;
  Require(padded >= kernel, ErrorCode::kShape,
          "kernel " + std::to_string(kernel) + " larger than padded input " + std::to_string(padded));
  return (padded - kernel) / stride + 1;
}

Tensor Conv2d(Tensor const &x, Tensor const &kernel, ConvGeometry geo)
{
  ConvDims const d = CheckConv(x.shape(), kernel.shape(), geo);
  Tensor         out({d.n, d.f, d.oh, d.ow});
  std::size_t const plane = d.oh * d.ow;
  std::vector<float> col;
  for (std::size_t b = 0; b < d.n; ++b)
  {
    float const *img = x.data().data() + b * d.c * d.h * d.w;
    for (std::size_t g = 0; g < d.groups; ++g)
    {
      Im2Col(img, d, geo, g, col);
      for (std::size_t fo = 0; fo < d.fg; ++fo)
      {
        std::size_t const f    = g * d.fg + fo;
        float const      *krow = kernel.data().data() + f * d.patch;
        float            *dst  = out.data().data() + (b * d.f + f) * plane;
        for (std::size_t p = 0; p < plane; ++p)
        {
          dst[p] = static_cast<float>(Dot(col.data() + p * d.patch, krow, d.patch));
        }
      }
    }
  }
  return out;
}

Conv2dGrads Conv2dBackward(Tensor const &x, Tensor const &kernel, Tensor const &dy, ConvGeometry geo,
                           bool need_dx)
{
  ConvDims const d = CheckConv(x.shape(), kernel.shape(), geo);
  Require(dy.shape() == Shape({d.n, d.f, d.oh, d.ow}), ErrorCode::kShape,
          "conv2d upstream gradient has shape " + ShapeString(dy.shape()));
  std::size_t const   plane = d.oh * d.ow;
  std::vector<double> dk(kernel.size(), 0.0);
  std::vector<double> dximg;
  Conv2dGrads         grads;
  if (need_dx)
  {
    grads.dx = Tensor(x.shape());
  }
  std::vector<float>  col;
  std::vector<double> dcol;
  for (std::size_t b = 0; b < d.n; ++b)
  {
    float const *img = x.data().data() + b * d.c * d.h * d.w;
    if (need_dx)
    {
      dximg.assign(d.c * d.h * d.w, 0.0);
    }
    for (std::size_t g = 0; g < d.groups; ++g)
    {
      Im2Col(img, d, geo, g, col);
      if (need_dx)
      {
        dcol.assign(plane * d.patch, 0.0);
      }
      for (std::size_t fo = 0; fo < d.fg; ++fo)
      {
        std::size_t const f    = g * d.fg + fo;
        float const      *krow = kernel.data().data() + f * d.patch;
        float const      *grow = dy.data().data() + (b * d.f + f) * plane;
        double           *dkr  = dk.data() + f * d.patch;
        for (std::size_t p = 0; p < plane; ++p)
        {
          double const gp = grow[p];
          if (gp == 0.0)
          {
            continue;
          }
          float const *cp = col.data() + p * d.patch;
          for (std::size_t j = 0; j < d.patch; ++j)
          {
            dkr[j] += gp * cp[j];
          }
          if (need_dx)
          {
            double *dc = dcol.data() + p * d.patch;
            for (std::size_t j = 0; j < d.patch; ++j)
            {
              dc[j] += gp * krow[j];
            }
          }
        }
      }
      if (need_dx)
      {
        Col2ImAdd(dcol, d, geo, g, dximg.data());
      }
    }
    if (need_dx)
    {
      float *dst = grads.dx.data().data() + b * d.c * d.h * d.w;
      for (std::size_t i = 0; i < dximg.size(); ++i)
      {
        dst[i] = static_cast<float>(dximg[i]);
      }
    }
  }
  grads.dkernel = Tensor(kernel.shape());
  for (std::size_t i = 0; i < dk.size(); ++i)
  {
    grads.dkernel[i] = static_cast<float>(dk[i]);
  }
  return grads;
}

Tensor GlobalAvgPool(Tensor const &x)
{
  Require(x.rank() == 4, ErrorCode::kShape, "global_avg_pool expects [n,c,h,w], got " + ShapeString(x.shape()));
  std::size_t const n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Require(hw >= 1, ErrorCode::kShape, "global_avg_pool needs h,w >= 1");
  Tensor out({n, c});
  for (std::size_t i = 0; i < n * c; ++i)
  {
    double       s = 0.0;
    float const *p = x.data().data() + i * hw;
    for (std::size_t j = 0; j < hw; ++j)
    {
      s += p[j];
    }
    out[i] = static_cast<float>(s / static_cast<double>(hw));
  }
  return out;
}

Tensor GlobalAvgPoolBackward(Shape const &x_shape, Tensor const &dy)
{
  Require(x_shape.size() == 4, ErrorCode::kShape, "global_avg_pool backward expects rank-4 input shape");
  std::size_t const n = x_shape[0], c = x_shape[1], hw = x_shape[2] * x_shape[3];
  Require(dy.shape() == Shape({n, c}), ErrorCode::kShape,
          "global_avg_pool upstream gradient has shape " + ShapeString(dy.shape()));
  Tensor       dx(x_shape);
  double const inv = 1.0 / static_cast<double>(hw);
  for (std::size_t i = 0; i < n * c; ++i)
  {
    float const v = static_cast<float>(dy[i] * inv);
    std::fill_n(dx.data().data() + i * hw, hw, v);
  }
  return dx;
}

Tensor Relu(Tensor const &x)
{
  Tensor y = x;
  for (auto &v : y.data())
  {
    v = v > 0.0f ? v : 0.0f;
  }
  return y;
}

Tensor ReluBackward(Tensor const &x, Tensor const &dy)
{
  Require(x.shape() == dy.shape(), ErrorCode::kShape, "relu backward shape mismatch");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
  }
  return dx;
}

Tensor Softmax(Tensor const &logits)
{
  Require(logits.rank() == 2, ErrorCode::kShape, "softmax expects [n,c]");
  std::size_t const n = logits.dim(0), c = logits.dim(1);
  Tensor            p(logits.shape());
  for (std::size_t i = 0; i < n; ++i)
  {
    auto   row = logits.row(i);
    double mx  = -std::numeric_limits<double>::infinity();
    for (float v : row)
    {
      mx = std::max(mx, static_cast<double>(v));
    }
    double z = 0.0;
    for (float v : row)
    {
      z += std::exp(static_cast<double>(v) - mx);
    }
    for (std::size_t j = 0; j < c; ++j)
    {
      p[i * c + j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / z);
    }
  }
  return p;
}

SoftmaxXent SoftmaxCrossEntropy(Tensor const &logits, std::span<int const> labels)
{
  Require(logits.rank() == 2, ErrorCode::kShape, "softmax_xent expects [n,c] logits");
  std::size_t const n = logits.dim(0), c = logits.dim(1);
  Require(labels.size() == n, ErrorCode::kShape, "label count does not match batch size");
  Require(n > 0, ErrorCode::kEmptyBatch, "softmax_xent on an empty batch");
  SoftmaxXent out;
  out.dlogits = Tensor(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
  {
    int const y = labels[i];
    Require(y >= 0 && static_cast<std::size_t>(y) < c, ErrorCode::kIndex,
            "label " + std::to_string(y) + " out of range for " + std::to_string(c) + " classes");
    auto   row = logits.row(i);
    double mx  = -std::numeric_limits<double>::infinity();
    for (float v : row)
    {
      mx = std::max(mx, static_cast<double>(v));
    }
    double z = 0.0;
    for (float v : row)
    {
      z += std::exp(static_cast<double>(v) - mx);
    }
    double const logz = std::log(z) + mx;
    total += logz - static_cast<double>(row[static_cast<std::size_t>(y)]);
    for (std::size_t j = 0; j < c; ++j)
    {
      double p = std::exp(static_cast<double>(row[j]) - logz);
      if (static_cast<int>(j) == y)
      {
        p -= 1.0;
      }
      out.dlogits[i * c + j] = static_cast<float>(p / static_cast<double>(n));
    }
  }
  out.loss = total / static_cast<double>(n);
  return out;
}

std::vector<int> ArgMaxRows(Tensor const &logits)
{
  Require(logits.rank() == 2, ErrorCode::kShape, "argmax expects [n,c]");
  std::vector<int> out(logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i)
  {
    auto row  = logits.row(i);
    auto best = std::max_element(row.begin(), row.end());  // first max wins ties
    out[i]    = static_cast<int>(best - row.begin());
  }
  return out;
}

}  // namespace lr

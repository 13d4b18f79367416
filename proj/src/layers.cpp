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

#include "latent_replay/layers.hpp"

#include "latent_replay/error.hpp"

#include <algorithm>
#include <cmath>

namespace lr {

char const *ToString(LayerKind kind)
{
  switch (kind)
  {
  case LayerKind::kDense:
    return "dense";
  case LayerKind::kConv:
    return "conv";
  case LayerKind::kDwConv:
    return "dwconv";
  case LayerKind::kRelu:
    return "relu";
  case LayerKind::kBrn:
    return "brn";
  case LayerKind::kAvgPool:
    return "avgpool";
  case LayerKind::kFlatten:
    return "flatten";
  }
  return "?";
}

LayerKind ParseLayerKind(std::string const &name)
{
  for (auto k : {LayerKind::kDense, LayerKind::kConv, LayerKind::kDwConv, LayerKind::kRelu,
                 LayerKind::kBrn, LayerKind::kAvgPool, LayerKind::kFlatten})
  {
    if (name == ToString(k))
    {
      return k;
    }
  }
  Fail(ErrorCode::kConfig, "unknown layer kind '" + name + "'");
}

namespace {

void RequireRows(Tensor const &x, Shape const &expected_row, std::string const &layer)
{
  Require(x.rank() == expected_row.size() + 1 && RowShape(x.shape()) == expected_row, ErrorCode::kShape,
          "layer '" + layer + "' expects rows of shape " + ShapeString(expected_row) + ", got " +
              ShapeString(x.shape()));
}

Tensor FromDouble(Shape shape, std::vector<double> const &v)
{
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < v.size(); ++i)
  {
    t[i] = static_cast<float>(v[i]);
  }
  return t;
}

// Channel layout helper for [n,c] and [n,c,h,w]: element (b, ch, s) lives at
// (b * c + ch) * spatial + s.
struct ChannelView
{
  std::size_t n, c, spatial;
};

ChannelView Channels(Tensor const &x)
{
  Require(x.rank() == 2 || x.rank() == 4, ErrorCode::kShape,
          "channel-wise layer expects [n,c] or [n,c,h,w], got " + ShapeString(x.shape()));
  std::size_t spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  return {x.dim(0), x.dim(1), spatial};
}

}  // namespace

// ---------------------------------------------------------------- dense

DenseLayer::DenseLayer(LayerSpec spec, std::size_t in_features)
  : Layer(std::move(spec))
  , weight({this->spec().out, in_features})
  , bias({this->spec().out})
{
  Require(this->spec().out > 0, ErrorCode::kConfig, "dense layer '" + name() + "' needs out > 0");
}

Shape DenseLayer::OutputRowShape(Shape const &input_row) const
{
  Require(input_row.size() == 1 && input_row[0] == weight.dim(1), ErrorCode::kShape,
          "dense layer '" + name() + "' expects " + std::to_string(weight.dim(1)) +
              " input features, got rows " + ShapeString(input_row));
  return {weight.dim(0)};
}

Tensor DenseLayer::Infer(Tensor const &x) const
{
  RequireRows(x, {weight.dim(1)}, name());
  Tensor            y   = MatMulTransB(x, weight);
  std::size_t const out = weight.dim(0);
  for (std::size_t i = 0; i < x.dim(0); ++i)
  {
    for (std::size_t j = 0; j < out; ++j)
    {
      y[i * out + j] += bias[j];
    }
  }
  return y;
}

Tensor DenseLayer::Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                            bool need_dx) const
{
  Tensor const     &x   = cache.input;
  std::size_t const n   = x.dim(0);
  std::size_t const in  = weight.dim(1);
  std::size_t const out = weight.dim(0);
  Require(dy.shape() == Shape({n, out}), ErrorCode::kShape,
          "dense '" + name() + "' upstream gradient has shape " + ShapeString(dy.shape()));

  std::vector<double> dw(out * in, 0.0), db(out, 0.0);
  for (std::size_t i = 0; i < n; ++i)
  {
    float const *xr = x.data().data() + i * in;
    for (std::size_t j = 0; j < out; ++j)
    {
      double const g = dy[i * out + j];
      db[j] += g;
      if (g == 0.0)
      {
        continue;
      }
      double *row = dw.data() + j * in;
      for (std::size_t k = 0; k < in; ++k)
      {
        row[k] += g * xr[k];
      }
    }
  }
  param_grads = {FromDouble(weight.shape(), dw), FromDouble(bias.shape(), db)};
  if (!need_dx)
  {
    return {};
  }
  Tensor              dx(x.shape());
  std::vector<double> acc(in);
  for (std::size_t i = 0; i < n; ++i)
  {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < out; ++j)
    {
      double const g = dy[i * out + j];
      if (g == 0.0)
      {
        continue;
      }
      float const *wr = weight.data().data() + j * in;
      for (std::size_t k = 0; k < in; ++k)
      {
        acc[k] += g * wr[k];
      }
    }
    for (std::size_t k = 0; k < in; ++k)
    {
      dx[i * in + k] = static_cast<float>(acc[k]);
    }
  }
  return dx;
}

std::vector<Tensor *> DenseLayer::Params()
{
  return {&weight, &bias};
}
std::vector<Tensor const *> DenseLayer::Params() const
{
  return {&weight, &bias};
}
std::vector<std::string> DenseLayer::ParamNames() const
{
  return {"weight", "bias"};
}
std::unique_ptr<Layer> DenseLayer::Clone() const
{
  return std::make_unique<DenseLayer>(*this);
}

void DenseLayer::Initialize(SeededRng &rng)
{
  double const stddev = std::sqrt(2.0 / static_cast<double>(weight.dim(1)));
  for (auto &w : weight.data())
  {
    w = static_cast<float>(rng.Normal(0.0, stddev));
  }
  bias.fill(0.0f);
}

// ---------------------------------------------------------------- conv

ConvLayer::ConvLayer(LayerSpec spec, std::size_t in_channels)
  : Layer(std::move(spec))
{
  auto const &s = this->spec();
  Require(s.kernel >= 1 && s.stride >= 1, ErrorCode::kConfig, "conv layer '" + name() + "' needs kernel, stride >= 1");
  std::size_t filters = s.out;
  if (s.kind == LayerKind::kDwConv)
  {
    Require(s.out == 0 || s.out == in_channels, ErrorCode::kConfig,
            "depthwise layer '" + name() + "' must keep the channel count");
    filters = in_channels;
    groups_ = in_channels;
  }
  else
  {
    Require(filters > 0, ErrorCode::kConfig, "conv layer '" + name() + "' needs out > 0");
    groups_ = 1;
  }
  weight = Tensor({filters, in_channels / groups_, s.kernel, s.kernel});
  if (s.bias)
  {
    bias = Tensor({filters});
  }
}

ConvGeometry ConvLayer::geometry() const
{
  return {spec().stride, spec().pad, groups_};
}

Shape ConvLayer::OutputRowShape(Shape const &input_row) const
{
  Require(input_row.size() == 3, ErrorCode::kShape,
          "conv layer '" + name() + "' expects [c,h,w] rows, got " + ShapeString(input_row));
  Require(input_row[0] == weight.dim(1) * groups_, ErrorCode::kShape,
          "conv layer '" + name() + "' expects " + std::to_string(weight.dim(1) * groups_) + " channels");
  return {weight.dim(0), ConvOutExtent(input_row[1], spec().kernel, spec().stride, spec().pad),
          ConvOutExtent(input_row[2], spec().kernel, spec().stride, spec().pad)};
}

Tensor ConvLayer::Infer(Tensor const &x) const
{
  Require(x.rank() == 4, ErrorCode::kShape, "conv layer '" + name() + "' expects [n,c,h,w], got " + ShapeString(x.shape()));
  Tensor y = Conv2d(x, weight, geometry());
  if (!bias.empty())
  {
    std::size_t const f = y.dim(1), plane = y.dim(2) * y.dim(3);
    for (std::size_t b = 0; b < y.dim(0); ++b)
    {
      for (std::size_t c = 0; c < f; ++c)
      {
        float *p = y.data().data() + (b * f + c) * plane;
        for (std::size_t s = 0; s < plane; ++s)
        {
          p[s] += bias[c];
        }
      }
    }
  }
  return y;
}

Tensor ConvLayer::Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                           bool need_dx) const
{
  auto grads = Conv2dBackward(cache.input, weight, dy, geometry(), need_dx);
  param_grads.clear();
  param_grads.push_back(std::move(grads.dkernel));
  if (!bias.empty())
  {
    std::size_t const   f = dy.dim(1), plane = dy.dim(2) * dy.dim(3);
    std::vector<double> db(f, 0.0);
    for (std::size_t b = 0; b < dy.dim(0); ++b)
    {
      for (std::size_t c = 0; c < f; ++c)
      {
        float const *p = dy.data().data() + (b * f + c) * plane;
        for (std::size_t s = 0; s < plane; ++s)
        {
          db[c] += p[s];
        }
      }
    }
    param_grads.push_back(FromDouble(bias.shape(), db));
  }
  return std::move(grads.dx);
}

std::vector<Tensor *> ConvLayer::Params()
{
  if (bias.empty())
  {
    return {&weight};
  }
  return {&weight, &bias};
}
std::vector<Tensor const *> ConvLayer::Params() const
{
  if (bias.empty())
  {
    return {&weight};
  }
  return {&weight, &bias};
}
std::vector<std::string> ConvLayer::ParamNames() const
{
  if (bias.empty())
  {
    return {"weight"};
  }
  return {"weight", "bias"};
}
std::unique_ptr<Layer> ConvLayer::Clone() const
{
  return std::make_unique<ConvLayer>(*this);
}

void ConvLayer::Initialize(SeededRng &rng)
{
  std::size_t const fan_in = weight.dim(1) * weight.dim(2) * weight.dim(3);
  double const      stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto &w : weight.data())
  {
    w = static_cast<float>(rng.Normal(0.0, stddev));
  }
  if (!bias.empty())
  {
    bias.fill(0.0f);
  }
}

// ---------------------------------------------------------------- relu, pool, flatten

Shape ReluLayer::OutputRowShape(Shape const &input_row) const
{
  return input_row;
}
Tensor ReluLayer::Infer(Tensor const &x) const
{
  return Relu(x);
}
Tensor ReluLayer::Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                           bool need_dx) const
{
  param_grads.clear();
  return need_dx ? ReluBackward(cache.input, dy) : Tensor{};
}
std::unique_ptr<Layer> ReluLayer::Clone() const
{
  return std::make_unique<ReluLayer>(*this);
}

Shape AvgPoolLayer::OutputRowShape(Shape const &input_row) const
{
  Require(input_row.size() == 3, ErrorCode::kShape,
          "avgpool layer '" + name() + "' expects [c,h,w] rows, got " + ShapeString(input_row));
  return {input_row[0]};
}
Tensor AvgPoolLayer::Infer(Tensor const &x) const
{
  return GlobalAvgPool(x);
}
Tensor AvgPoolLayer::Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                              bool need_dx) const
{
  param_grads.clear();
  return need_dx ? GlobalAvgPoolBackward(cache.input.shape(), dy) : Tensor{};
}
std::unique_ptr<Layer> AvgPoolLayer::Clone() const
{
  return std::make_unique<AvgPoolLayer>(*this);
}

Shape FlattenLayer::OutputRowShape(Shape const &input_row) const
{
  return {ShapeSize(input_row)};
}
Tensor FlattenLayer::Infer(Tensor const &x) const
{
  Require(x.rank() >= 1, ErrorCode::kShape, "flatten of a rank-0 tensor");
  return x.reshaped({x.dim(0), x.row_size()});
}
Tensor FlattenLayer::Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                              bool need_dx) const
{
  param_grads.clear();
  return need_dx ? dy.reshaped(cache.input.shape()) : Tensor{};
}
std::unique_ptr<Layer> FlattenLayer::Clone() const
{
  return std::make_unique<FlattenLayer>(*this);
}

// ---------------------------------------------------------------- batch renorm

BrnLayer::BrnLayer(LayerSpec spec, std::size_t channels)
  : Layer(std::move(spec))
  , gamma({channels}, 1.0f)
  , beta({channels}, 0.0f)
  , mu_mov({channels}, 0.0f)
  , sigma_mov({channels}, 1.0f)
{
  auto const &p = this->spec().brn;
  Require(p.r_max >= 1.0f && p.d_max >= 0.0f, ErrorCode::kConfig, "brn '" + name() + "' needs r_max >= 1, d_max >= 0");
  Require(p.avg_rate > 0.0 && p.avg_rate < 1.0, ErrorCode::kConfig, "brn '" + name() + "' avg_rate must be in (0,1)");
  Require(p.eps > 0.0, ErrorCode::kConfig, "brn eps must be positive");
}

Shape BrnLayer::OutputRowShape(Shape const &input_row) const
{
  Require((input_row.size() == 1 || input_row.size() == 3) && input_row[0] == channels(), ErrorCode::kShape,
          "brn '" + name() + "' expects " + std::to_string(channels()) + " channels, got rows " +
              ShapeString(input_row));
  return input_row;
}

void BrnLayer::SetMovingMoments(std::vector<float> mu, std::vector<float> sigma)
{
  Require(mu.size() == channels() && sigma.size() == channels(), ErrorCode::kShape, "moment vector length mismatch");
  for (float s : sigma)
  {
    Require(s > 0.0f, ErrorCode::kNumeric, "moving sigma must stay positive");
  }
  mu_mov              = Tensor({channels()}, std::move(mu));
  sigma_mov           = Tensor({channels()}, std::move(sigma));
  moments_initialized = true;
}

Tensor BrnLayer::Infer(Tensor const &x) const
{
  auto const v = Channels(x);
  Require(v.c == channels(), ErrorCode::kShape, "brn '" + name() + "' channel mismatch");
  Tensor y(x.shape());
  for (std::size_t b = 0; b < v.n; ++b)
  {
    for (std::size_t ch = 0; ch < v.c; ++ch)
    {
      std::size_t base = (b * v.c + ch) * v.spatial;
      for (std::size_t s = 0; s < v.spatial; ++s)
      {
        // Same arithmetic as the frozen-moment train path, so both agree bit for bit.
        double const xn = (x[base + s] - static_cast<double>(mu_mov[ch])) / sigma_mov[ch];
        y[base + s]     = static_cast<float>(gamma[ch] * xn + beta[ch]);
      }
    }
  }
  return y;
}

Tensor BrnLayer::Train(Tensor const &x, LayerCache &cache)
{
  auto const v = Channels(x);
  Require(v.c == channels(), ErrorCode::kShape, "brn '" + name() + "' channel mismatch");
  Require(v.n > 0, ErrorCode::kEmptyBatch, "brn '" + name() + "' on an empty batch");
  auto const &p = spec().brn;

  cache.input       = x;
  cache.normalized  = Tensor(x.shape());
  cache.sigma.assign(v.c, 1.0);
  cache.r.assign(v.c, 1.0);
  cache.d.assign(v.c, 0.0);
  cache.moving_path = moments_frozen;

  Tensor y(x.shape());
  if (moments_frozen)
  {
    for (std::size_t ch = 0; ch < v.c; ++ch)
    {
      cache.sigma[ch] = sigma_mov[ch];
    }
    for (std::size_t b = 0; b < v.n; ++b)
    {
      for (std::size_t ch = 0; ch < v.c; ++ch)
      {
        std::size_t base = (b * v.c + ch) * v.spatial;
        for (std::size_t s = 0; s < v.spatial; ++s)
        {
          double const xn             = (x[base + s] - static_cast<double>(mu_mov[ch])) / sigma_mov[ch];
          cache.normalized[base + s] = static_cast<float>(xn);
          y[base + s]                = static_cast<float>(gamma[ch] * xn + beta[ch]);
        }
      }
    }
    return y;
  }

  double const        m = static_cast<double>(v.n * v.spatial);
  std::vector<double> mean(v.c, 0.0), var(v.c, 0.0);
  for (std::size_t b = 0; b < v.n; ++b)
  {
    for (std::size_t ch = 0; ch < v.c; ++ch)
    {
      std::size_t base = (b * v.c + ch) * v.spatial;
      for (std::size_t s = 0; s < v.spatial; ++s)
      {
        mean[ch] += x[base + s];
      }
    }
  }
  for (auto &mu : mean)
  {
    mu /= m;
  }
  for (std::size_t b = 0; b < v.n; ++b)
  {
    for (std::size_t ch = 0; ch < v.c; ++ch)
    {
      std::size_t base = (b * v.c + ch) * v.spatial;
      for (std::size_t s = 0; s < v.spatial; ++s)
      {
        double const dlt = x[base + s] - mean[ch];
        var[ch] += dlt * dlt;
      }
    }
  }
  std::vector<double> sigma_b(v.c);
  for (std::size_t ch = 0; ch < v.c; ++ch)
  {
    sigma_b[ch] = std::sqrt(var[ch] / m + p.eps);
  }

  if (!moments_initialized)
  {
    for (std::size_t ch = 0; ch < v.c; ++ch)
    {
      mu_mov[ch]    = static_cast<float>(mean[ch]);
      sigma_mov[ch] = static_cast<float>(sigma_b[ch]);
    }
    moments_initialized = true;
  }

  last_r.assign(v.c, 1.0);
  last_d.assign(v.c, 0.0);
  for (std::size_t ch = 0; ch < v.c; ++ch)
  {
    double const smov = sigma_mov[ch];
    last_r[ch] = std::clamp(sigma_b[ch] / smov, 1.0 / p.r_max, static_cast<double>(p.r_max));
    last_d[ch] = std::clamp((mean[ch] - mu_mov[ch]) / smov, -static_cast<double>(p.d_max),
                            static_cast<double>(p.d_max));
  }

  for (std::size_t b = 0; b < v.n; ++b)
  {
    for (std::size_t ch = 0; ch < v.c; ++ch)
    {
      std::size_t base = (b * v.c + ch) * v.spatial;
      for (std::size_t s = 0; s < v.spatial; ++s)
      {
        double const xn             = (x[base + s] - mean[ch]) / sigma_b[ch];
        cache.normalized[base + s] = static_cast<float>(xn);
        y[base + s] = static_cast<float>(gamma[ch] * (xn * last_r[ch] + last_d[ch]) + beta[ch]);
      }
    }
  }
  cache.sigma = sigma_b;
  cache.r     = last_r;
  cache.d     = last_d;

  double const a = p.avg_rate;
  for (std::size_t ch = 0; ch < v.c; ++ch)
  {
    mu_mov[ch]    = static_cast<float>(a * mu_mov[ch] + (1.0 - a) * mean[ch]);
    sigma_mov[ch] = static_cast<float>(a * sigma_mov[ch] + (1.0 - a) * sigma_b[ch]);
  }
  return y;
}

Tensor BrnLayer::Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                          bool need_dx) const
{
  Tensor const &x = cache.input;
  Require(dy.shape() == x.shape(), ErrorCode::kShape, "brn '" + name() + "' upstream gradient shape mismatch");
  auto const          v = Channels(x);
  double const        m = static_cast<double>(v.n * v.spatial);
  std::vector<double> dgamma(v.c, 0.0), dbeta(v.c, 0.0), sum_dxn(v.c, 0.0), sum_dxn_xn(v.c, 0.0);

  // With r, d constant: y = gamma * (xn * r + d) + beta on the batch path,
  // y = gamma * xn + beta on the moving path (r = 1, d = 0 in the cache).
  for (std::size_t b = 0; b < v.n; ++b)
  {
    for (std::size_t ch = 0; ch < v.c; ++ch)
    {
      std::size_t  base = (b * v.c + ch) * v.spatial;
      double const r    = cache.r[ch];
      double const d    = cache.d[ch];
      for (std::size_t s = 0; s < v.spatial; ++s)
      {
        double const g  = dy[base + s];
        double const xn = cache.normalized[base + s];
        dgamma[ch] += g * (xn * r + d);
        dbeta[ch] += g;
        double const dxn = g * gamma[ch] * r;
        sum_dxn[ch] += dxn;
        sum_dxn_xn[ch] += dxn * xn;
      }
    }
  }
  param_grads = {FromDouble(gamma.shape(), dgamma), FromDouble(beta.shape(), dbeta)};
  if (!need_dx)
  {
    return {};
  }
  Tensor dx(x.shape());
  for (std::size_t b = 0; b < v.n; ++b)
  {
    for (std::size_t ch = 0; ch < v.c; ++ch)
    {
      std::size_t  base  = (b * v.c + ch) * v.spatial;
      double const r     = cache.r[ch];
      double const sigma = cache.sigma[ch];
      for (std::size_t s = 0; s < v.spatial; ++s)
      {
        double const dxn = dy[base + s] * gamma[ch] * r;
        if (cache.moving_path)
        {
          dx[base + s] = static_cast<float>(dxn / sigma);
        }
        else
        {
          double const xn = cache.normalized[base + s];
          dx[base + s]    = static_cast<float>((m * dxn - sum_dxn[ch] - xn * sum_dxn_xn[ch]) / (m * sigma));
        }
      }
    }
  }
  return dx;
}

std::vector<Tensor *> BrnLayer::Params()
{
  return {&gamma, &beta};
}
std::vector<Tensor const *> BrnLayer::Params() const
{
  return {&gamma, &beta};
}
std::vector<std::string> BrnLayer::ParamNames() const
{
  return {"gamma", "beta"};
}
std::unique_ptr<Layer> BrnLayer::Clone() const
{
  return std::make_unique<BrnLayer>(*this);
}

// ---------------------------------------------------------------- factory

std::unique_ptr<Layer> MakeLayer(LayerSpec const &spec, Shape const &input_row)
{
  switch (spec.kind)
  {
  case LayerKind::kDense:
    Require(input_row.size() == 1, ErrorCode::kShape,
            "dense layer '" + spec.name + "' needs flat rows, got " + ShapeString(input_row) +
                " (insert a flatten or avgpool layer)");
    return std::make_unique<DenseLayer>(spec, input_row[0]);
  case LayerKind::kConv:
  case LayerKind::kDwConv:
    Require(input_row.size() == 3, ErrorCode::kShape,
            "conv layer '" + spec.name + "' needs [c,h,w] rows, got " + ShapeString(input_row));
    return std::make_unique<ConvLayer>(spec, input_row[0]);
  case LayerKind::kRelu:
    return std::make_unique<ReluLayer>(spec);
  case LayerKind::kBrn:
    Require(input_row.size() == 1 || input_row.size() == 3, ErrorCode::kShape,
            "brn layer '" + spec.name + "' needs [c] or [c,h,w] rows");
    return std::make_unique<BrnLayer>(spec, input_row[0]);
  case LayerKind::kAvgPool:
    return std::make_unique<AvgPoolLayer>(spec);
  case LayerKind::kFlatten:
    return std::make_unique<FlattenLayer>(spec);
  }
  Fail(ErrorCode::kConfig, "unhandled layer kind");
}

}  // namespace lr

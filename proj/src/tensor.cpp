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

#include "latent_replay/tensor.hpp"

#include "latent_replay/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lr {

const char *ToString(ErrorCode code)
{
  switch (code)
  {
  case ErrorCode::kShape:
    return "shape error";
  case ErrorCode::kIndex:
    return "index error";
  case ErrorCode::kState:
    return "state error";
  case ErrorCode::kConfig:
    return "config error";
  case ErrorCode::kIo:
    return "io error";
  case ErrorCode::kFormat:
    return "format error";
  case ErrorCode::kLookup:
    return "lookup error";
  case ErrorCode::kNumeric:
    return "numeric error";
  case ErrorCode::kArithmetic:
    return "arithmetic error";
  case ErrorCode::kUnsupported:
    return "unsupported operation";
  case ErrorCode::kEmptyBatch:
    return "empty batch";
  }
  return "unknown error";
}

std::size_t ShapeSize(Shape const &shape)
{
  std::size_t n = 1;
  for (auto e : shape)
  {
    n *= e;
  }
  return n;
}

std::string ShapeString(Shape const &shape)
{
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
  {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill)
  : shape_(std::move(shape))
  , data_(ShapeSize(shape_), fill)
{}

Tensor::Tensor(Shape shape, std::vector<float> data)
  : shape_(std::move(shape))
  , data_(std::move(data))
{
  Require(data_.size() == ShapeSize(shape_), ErrorCode::kShape,
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
              ShapeString(shape_));
}

std::size_t Tensor::dim(std::size_t axis) const
{
  Require(axis < shape_.size(), ErrorCode::kShape,
          "axis " + std::to_string(axis) + " out of range for " + ShapeString(shape_));
  return shape_[axis];
}

std::size_t Tensor::row_size() const
{
  Require(!shape_.empty(), ErrorCode::kShape, "row_size of a rank-0 tensor");
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i)
  {
    n *= shape_[i];
  }
  return n;
}

std::span<float> Tensor::row(std::size_t i)
{
  std::size_t const rs = row_size();
  return std::span<float>(data_).subspan(i * rs, rs);
}

std::span<float const> Tensor::row(std::size_t i) const
{
  std::size_t const rs = row_size();
  return std::span<float const>(data_).subspan(i * rs, rs);
}

Tensor Tensor::rows(std::size_t begin, std::size_t count) const
{
  Require(!shape_.empty() && begin + count <= shape_[0], ErrorCode::kIndex,
          "row range out of bounds for " + ShapeString(shape_));
  Shape s  = shape_;
  s[0]     = count;
  auto rs  = row_size();
  auto beg = data_.begin() + static_cast<std::ptrdiff_t>(begin * rs);
  return Tensor(std::move(s), std::vector<float>(beg, beg + static_cast<std::ptrdiff_t>(count * rs)));
}

Tensor Tensor::gather_rows(std::span<std::size_t const> indices) const
{
  Require(!shape_.empty(), ErrorCode::kShape, "gather_rows on a rank-0 tensor");
  Shape s = shape_;
  s[0]    = indices.size();
  Tensor out(std::move(s));
  auto   rs = row_size();
  for (std::size_t i = 0; i < indices.size(); ++i)
  {
    Require(indices[i] < shape_[0], ErrorCode::kIndex, "gather index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * rs), rs,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * rs));
  }
  return out;
}

Tensor Tensor::reshaped(Shape shape) const
{
  Require(ShapeSize(shape) == data_.size(), ErrorCode::kShape,
          "cannot reshape " + ShapeString(shape_) + " to " + ShapeString(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(float value)
{
  std::fill(data_.begin(), data_.end(), value);
}

Shape RowShape(Shape const &batch_shape)
{
  Require(!batch_shape.empty(), ErrorCode::kShape, "rank-0 shape has no rows");
  return Shape(batch_shape.begin() + 1, batch_shape.end());
}

Shape WithBatch(std::size_t n, Shape const &row_shape)
{
  Shape s;
  s.reserve(row_shape.size() + 1);
  s.push_back(n);
  s.insert(s.end(), row_shape.begin(), row_shape.end());
  return s;
}

Tensor ConcatRows(Tensor const &a, Tensor const &b)
{
  if (a.rank() == 0)
  {
    return b;
  }
  if (b.rank() == 0)
  {
    return a;
  }
  Require(RowShape(a.shape()) == RowShape(b.shape()), ErrorCode::kShape,
          "cannot concatenate " + ShapeString(a.shape()) + " with " + ShapeString(b.shape()));
  std::vector<float> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor(WithBatch(a.dim(0) + b.dim(0), RowShape(a.shape())), std::move(data));
}

Tensor StackRows(std::span<Tensor const> patterns)
{
  Require(!patterns.empty(), ErrorCode::kEmptyBatch, "nothing to stack");
  Shape const &row = patterns.front().shape();
  std::vector<float> data;
  data.reserve(patterns.size() * patterns.front().size());
  for (auto const &p : patterns)
  {
    Require(p.shape() == row, ErrorCode::kShape,
            "stacked patterns disagree: " + ShapeString(p.shape()) + " vs " + ShapeString(row));
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  return Tensor(WithBatch(patterns.size(), row), std::move(data));
}

bool AllFinite(Tensor const &t)
{
  return std::all_of(t.data().begin(), t.data().end(), [](float v) { return std::isfinite(v); });
}

double MaxAbsDiff(Tensor const &a, Tensor const &b)
{
  Require(a.shape() == b.shape(), ErrorCode::kShape,
          "MaxAbsDiff shapes differ: " + ShapeString(a.shape()) + " vs " + ShapeString(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

double L2Norm(std::span<float const> v)
{
  double s = 0.0;
  for (float x : v)
  {
    s += static_cast<double>(x) * x;
  }
  return std::sqrt(s);
}

}  // namespace lr

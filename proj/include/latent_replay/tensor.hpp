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

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lr {

using Shape = std::vector<std::size_t>;

std::size_t ShapeSize(Shape const &shape);
std::string ShapeString(Shape const &shape);

/// Dense row-major float32 array. Dimension 0 is the batch dimension for
/// everything that flows through a network.
class Tensor
{
public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  Shape const &shape() const noexcept
  {
    return shape_;
  }
  std::size_t rank() const noexcept
  {
    return shape_.size();
  }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept
  {
    return data_.size();
  }
  bool empty() const noexcept
  {
    return data_.empty();
  }

  std::span<float> data() noexcept
  {
    return data_;
  }
  std::span<float const> data() const noexcept
  {
    return data_;
  }
  std::vector<float> const &values() const noexcept
  {
    return data_;
  }

  float &operator[](std::size_t i) noexcept
  {
    return data_[i];
  }
  float operator[](std::size_t i) const noexcept
  {
    return data_[i];
  }

  /// Number of elements per batch row (product of extents after the first).
  std::size_t row_size() const;
  std::span<float> row(std::size_t i);
  std::span<float const> row(std::size_t i) const;

  /// Copies rows [begin, begin + count) into a new tensor.
  Tensor rows(std::size_t begin, std::size_t count) const;
  /// Gathers the listed rows, in order.
  Tensor gather_rows(std::span<std::size_t const> indices) const;

  Tensor reshaped(Shape shape) const;
  void fill(float value);

  bool operator==(Tensor const &other) const = default;

private:
  Shape              shape_;
  std::vector<float> data_;
};

/// Joins a and b along the batch dimension. Either side may have zero rows
/// (or be default constructed) as long as the per-row shapes agree.
Tensor ConcatRows(Tensor const &a, Tensor const &b);

/// Stacks equal-shaped single patterns into one batch tensor.
Tensor StackRows(std::span<Tensor const> patterns);

/// Shape of one row of a batched tensor of shape `batch_shape`.
Shape RowShape(Shape const &batch_shape);
Shape WithBatch(std::size_t n, Shape const &row_shape);

bool AllFinite(Tensor const &t);
double MaxAbsDiff(Tensor const &a, Tensor const &b);
double L2Norm(std::span<float const> v);

}  // namespace lr

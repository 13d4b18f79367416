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

#include "latent_replay/tensor.hpp"

#include <cstddef>
#include <span>

namespace lr {

// All kernels are single threaded. Dot products and reductions accumulate in
// double and always run in the same order, so results are bit-reproducible.

/// [m,k] x [k,n] -> [m,n]
Tensor MatMul(Tensor const &a, Tensor const &b);

/// [m,k] x [n,k]^T -> [m,n]; the layout dense layers use for class-row weights.
Tensor MatMulTransB(Tensor const &a, Tensor const &b);

struct ConvGeometry
{
  std::size_t stride{1};
  std::size_t pad{0};
  std::size_t groups{1};
};

/// Output spatial extent for one axis, floor((in + 2 pad - kernel) / stride) + 1.
std::size_t ConvOutExtent(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t pad);

/// Grouped 2-D cross-correlation.
/// x: [n,c,h,w], kernel: [f, c/groups, kh, kw] -> [n,f,h',w'].
/// groups == c with c/groups == 1 is depthwise convolution.
Tensor Conv2d(Tensor const &x, Tensor const &kernel, ConvGeometry geo);

struct Conv2dGrads
{
  Tensor dx;
  Tensor dkernel;
};

/// Gradients of Conv2d given the upstream gradient dy. `need_dx` may be false
/// when the input is a leaf (saves the col2im pass).
Conv2dGrads Conv2dBackward(Tensor const &x, Tensor const &kernel, Tensor const &dy,
                           ConvGeometry geo, bool need_dx = true);

/// [n,c,h,w] -> [n,c], per channel spatial mean.
Tensor GlobalAvgPool(Tensor const &x);
Tensor GlobalAvgPoolBackward(Shape const &x_shape, Tensor const &dy);

Tensor Relu(Tensor const &x);
Tensor ReluBackward(Tensor const &x, Tensor const &dy);

struct SoftmaxXent
{
  double loss{0.0};
  Tensor dlogits;
};

/// Mean cross entropy over the batch with max-subtracted softmax;
/// dlogits = (softmax - onehot) / n.
SoftmaxXent SoftmaxCrossEntropy(Tensor const &logits, std::span<int const> labels);

Tensor Softmax(Tensor const &logits);

/// Row-wise argmax, ties resolved to the lowest index.
std::vector<int> ArgMaxRows(Tensor const &logits);

}  // namespace lr

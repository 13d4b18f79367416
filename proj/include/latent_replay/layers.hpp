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

#include "latent_replay/kernels.hpp"
#include "latent_replay/rng.hpp"
#include "latent_replay/tensor.hpp"

#include <memory>
#include <string>
#include <vector>

namespace lr {

enum class Mode
{
  kTrain,
  kEval,
};

enum class LayerKind
{
  kDense,
  kConv,
  kDwConv,
  kRelu,
  kBrn,
  kAvgPool,
  kFlatten,
};

char const *ToString(LayerKind kind);
LayerKind   ParseLayerKind(std::string const &name);

struct BrnParams
{
  float  r_max{1.25f};
  float  d_max{0.5f};
  double avg_rate{0.99995};
  double eps{1e-5};
};

struct LayerSpec
{
  std::string name;
  LayerKind   kind{LayerKind::kRelu};
  std::size_t out{0};     // dense units, conv filters
  std::size_t kernel{1};  // square kernels only
  std::size_t stride{1};
  std::size_t pad{0};
  bool        bias{true};
  BrnParams   brn{};
};

/// Per-layer intermediates kept from the last train-mode forward.
struct LayerCache
{
  Tensor              input;
  Tensor              normalized;  // BRN x-hat (batch path) or (x - mu) / sigma (moving path)
  std::vector<double> sigma;       // BRN per-channel divisor used in the forward
  std::vector<double> r;           // BRN per-channel r (1 on the moving path)
  std::vector<double> d;           // BRN per-channel d (0 on the moving path)
  bool                moving_path{false};
};

/// A layer's forward and hand-written backward. Train-mode forward may mutate
/// layer state (BRN moving moments); Infer never does.
class Layer
{
public:
  explicit Layer(LayerSpec spec)
    : spec_(std::move(spec))
  {}
  virtual ~Layer() = default;

  LayerSpec const &spec() const noexcept
  {
    return spec_;
  }
  std::string const &name() const noexcept
  {
    return spec_.name;
  }
  LayerKind kind() const noexcept
  {
    return spec_.kind;
  }

  virtual Shape  OutputRowShape(Shape const &input_row) const = 0;
  virtual Tensor Infer(Tensor const &x) const                 = 0;
  virtual Tensor Train(Tensor const &x, LayerCache &cache)
  {
    cache.input = x;
    return Infer(x);
  }
  /// Returns dL/dx (empty when need_dx is false); writes parameter gradients
  /// into `param_grads` in the order of Params().
  virtual Tensor Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                          bool need_dx) const = 0;

  virtual std::vector<Tensor *>       Params()
  {
    return {};
  }
  virtual std::vector<Tensor const *> Params() const
  {
    return {};
  }
  virtual std::vector<std::string> ParamNames() const
  {
    return {};
  }

  virtual std::unique_ptr<Layer> Clone() const = 0;

private:
  LayerSpec spec_;
};

class DenseLayer final : public Layer
{
public:
  DenseLayer(LayerSpec spec, std::size_t in_features);

  Shape  OutputRowShape(Shape const &input_row) const override;
  Tensor Infer(Tensor const &x) const override;
  Tensor Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                  bool need_dx) const override;

  std::vector<Tensor *>       Params() override;
  std::vector<Tensor const *> Params() const override;
  std::vector<std::string>    ParamNames() const override;
  std::unique_ptr<Layer>      Clone() const override;

  void Initialize(SeededRng &rng);

  /// [out, in]; row j holds the weights of output unit (class) j.
  Tensor weight;
  Tensor bias;
};

/// Covers both plain (groups = 1) and depthwise (groups = channels) convolution.
class ConvLayer final : public Layer
{
public:
  ConvLayer(LayerSpec spec, std::size_t in_channels);

  Shape  OutputRowShape(Shape const &input_row) const override;
  Tensor Infer(Tensor const &x) const override;
  Tensor Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                  bool need_dx) const override;

  std::vector<Tensor *>       Params() override;
  std::vector<Tensor const *> Params() const override;
  std::vector<std::string>    ParamNames() const override;
  std::unique_ptr<Layer>      Clone() const override;

  void         Initialize(SeededRng &rng);
  ConvGeometry geometry() const;

  Tensor weight;  // [f, c/groups, k, k]
  Tensor bias;    // [f] (empty when the spec disables bias)

private:
  std::size_t groups_;
};

class ReluLayer final : public Layer
{
public:
  using Layer::Layer;
  Shape  OutputRowShape(Shape const &input_row) const override;
  Tensor Infer(Tensor const &x) const override;
  Tensor Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                  bool need_dx) const override;
  std::unique_ptr<Layer> Clone() const override;
};

class AvgPoolLayer final : public Layer
{
public:
  using Layer::Layer;
  Shape  OutputRowShape(Shape const &input_row) const override;
  Tensor Infer(Tensor const &x) const override;
  Tensor Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                  bool need_dx) const override;
  std::unique_ptr<Layer> Clone() const override;
};

class FlattenLayer final : public Layer
{
public:
  using Layer::Layer;
  Shape  OutputRowShape(Shape const &input_row) const override;
  Tensor Infer(Tensor const &x) const override;
  Tensor Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                  bool need_dx) const override;
  std::unique_ptr<Layer> Clone() const override;
};

/// Batch Renormalization over the channel axis (axis 1) of [n,c] or [n,c,h,w].
///
/// Train mode, batch path:
///   r = clip(sigma_B / sigma_mov, 1/r_max, r_max)
///   d = clip((mu_B - mu_mov) / sigma_mov, -d_max, d_max)
///   y = gamma * ((x - mu_B) / sigma_B * r + d) + beta
///   m <- avg_rate * m + (1 - avg_rate) * batch_stat    (unless moments are frozen)
/// Eval mode, and train mode while moments are frozen (moving path):
///   y = gamma * (x - mu_mov) / sigma_mov + beta
/// sigma is always sqrt(var + eps). r and d are constants in the backward pass.
///
/// The first train-mode batch seen with moments free seeds the moving moments
/// with that batch's statistics.
class BrnLayer final : public Layer
{
public:
  BrnLayer(LayerSpec spec, std::size_t channels);

  Shape  OutputRowShape(Shape const &input_row) const override;
  Tensor Infer(Tensor const &x) const override;
  Tensor Train(Tensor const &x, LayerCache &cache) override;
  Tensor Backward(Tensor const &dy, LayerCache const &cache, std::vector<Tensor> &param_grads,
                  bool need_dx) const override;

  std::vector<Tensor *>       Params() override;
  std::vector<Tensor const *> Params() const override;
  std::vector<std::string>    ParamNames() const override;
  std::unique_ptr<Layer>      Clone() const override;

  std::size_t channels() const noexcept
  {
    return gamma.size();
  }
  BrnParams const &params() const noexcept
  {
    return spec().brn;
  }

  /// Sets both moving moments and marks them initialized.
  void SetMovingMoments(std::vector<float> mu, std::vector<float> sigma);

  Tensor gamma;
  Tensor beta;
  Tensor mu_mov;
  Tensor sigma_mov;
  bool   moments_frozen{false};
  bool   moments_initialized{false};
  /// r and d from the most recent batch-path forward (diagnostics and tests).
  std::vector<double> last_r;
  std::vector<double> last_d;
};

std::unique_ptr<Layer> MakeLayer(LayerSpec const &spec, Shape const &input_row);

}  // namespace lr

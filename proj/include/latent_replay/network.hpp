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

#include "latent_replay/layers.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lr {

/// Architecture document: ordered layers, input row shape, class count, and
/// the names of the latent replay tap and the classifier head.
struct NetworkSpec
{
  Shape                  input;  // one pattern, e.g. {1, 16, 16}
  std::size_t            classes{0};
  std::string            tap;
  std::string            head;
  std::vector<LayerSpec> layers;
};

/// Parses the JSON architecture format:
/// {"input":[c,h,w], "classes":C, "tap":"name", "head":"name",
///  "layers":[{"name":..., "kind":"conv|dwconv|dense|relu|brn|avgpool|flatten",
///             "out":..., "kernel":..., "stride":..., "pad":..., "bias":...,
///             "r_max":..., "d_max":..., "avg_rate":..., "eps":...}, ...]}
/// Unknown keys are rejected.
NetworkSpec ParseNetworkSpec(std::string const &json_text);
NetworkSpec LoadNetworkSpec(std::filesystem::path const &path);
std::string NetworkSpecToJson(NetworkSpec const &spec);

struct ForwardResult
{
  Tensor logits;
  Tensor tapped;  // deep copy of the tap layer's output for the native rows
};

/// Per-layer parameter gradients, aligned with Layer::Params(). A layer whose
/// backward was skipped has an empty entry.
struct Gradients
{
  std::vector<std::vector<Tensor>> layers;

  bool has(std::size_t layer) const
  {
    return layer < layers.size() && !layers[layer].empty();
  }
};

/// Sequential network with a designated latent replay tap.
///
/// "Below the tap" means layers [0, tap]; "above the tap" means layers after
/// it. Stored latents are outputs of the tap layer. The tap may also be set to
/// kInputTap, in which case every layer is above it and latents are raw inputs.
class Network
{
public:
  static constexpr std::size_t kInputTap = static_cast<std::size_t>(-1);

  Network(NetworkSpec spec, std::uint64_t init_seed);
  Network(Network const &other);
  Network &operator=(Network const &other);
  Network(Network &&) noexcept            = default;
  Network &operator=(Network &&) noexcept = default;

  NetworkSpec const &spec() const noexcept
  {
    return spec_;
  }
  std::size_t num_layers() const noexcept
  {
    return layers_.size();
  }
  Layer &layer(std::size_t i)
  {
    return *layers_.at(i);
  }
  Layer const &layer(std::size_t i) const
  {
    return *layers_.at(i);
  }
  std::size_t index_of(std::string const &name) const;
  bool        has_layer(std::string const &name) const;

  Shape const &input_shape() const noexcept
  {
    return spec_.input;
  }
  /// Row shape produced by layer i (i == kInputTap gives the input shape).
  Shape const &output_shape(std::size_t i) const;
  std::size_t  classes() const noexcept
  {
    return spec_.classes;
  }

  std::size_t tap_index() const noexcept
  {
    return tap_;
  }
  std::string tap_name() const;
  /// Accepts a layer name or "input".
  void        set_tap(std::string const &name);
  Shape const &tap_shape() const
  {
    return output_shape(tap_);
  }

  std::size_t   head_index() const noexcept
  {
    return head_;
  }
  DenseLayer   &head();
  DenseLayer const &head() const;

  /// Effective multiplier: 0 for layers at or below the tap when frozen.
  double lr_mult(std::size_t i) const;
  void   set_lr_mult(std::size_t i, double mult);
  void   set_all_lr_mult(double mult);

  bool frozen_below_tap() const noexcept
  {
    return frozen_below_tap_;
  }
  void set_frozen_below_tap(bool frozen)
  {
    frozen_below_tap_ = frozen;
  }

  /// Freezes or frees BRN moving moments in layers [first, last].
  void set_moments_frozen(std::size_t first, std::size_t last, bool frozen);
  void set_moments_frozen_below_tap(bool frozen);
  void set_all_moments_frozen(bool frozen);

  /// Full forward. Train mode caches intermediates for Backward and may update
  /// BRN moments; eval mode uses moving moments only and leaves state untouched.
  ForwardResult Forward(Tensor const &x, Mode mode);
  /// Runs only the layers above the tap on tap-shaped latents.
  Tensor ForwardFrom(Tensor const &latent, Mode mode);
  /// Native rows go through the whole net, replay latents join at the tap.
  /// Layers above the tap see all n_native + n_replay rows.
  ForwardResult ForwardConcat(Tensor const &x_native, Tensor const &latent_replay, Mode mode);

  /// Eval-mode forward that never touches network state; safe to call
  /// concurrently on a shared network.
  Tensor Infer(Tensor const &x) const;
  Tensor InferTap(Tensor const &x) const;
  Tensor InferFrom(Tensor const &latent) const;

  /// Backward through the last train-mode forward. Replay rows' gradient is
  /// dropped at the tap; below the tap only the n_native rows flow, and that
  /// part is skipped when frozen_below_tap is set. `tap_grad_extra`, when
  /// given, is added to the native rows' gradient at the tap output.
  Gradients Backward(Tensor const &dlogits, std::size_t n_native, Tensor const *tap_grad_extra = nullptr);

  void SgdStep(Gradients const &grads, double base_lr);

  bool has_cached_forward() const noexcept
  {
    return cached_;
  }
  void clear_cache();

  /// All parameter tensors in layer order, optionally restricted to layers
  /// [first, last].
  std::vector<Tensor *>       parameters(std::size_t first = 0, std::size_t last = kInputTap);
  std::vector<Tensor const *> parameters(std::size_t first = 0, std::size_t last = kInputTap) const;

  /// Writes one LRT1 file per parameter tensor (and BRN moving moment) named
  /// "<layer>.<param>.lrt", with '/' in layer names replaced by '_'.
  void SaveCheckpoint(std::filesystem::path const &dir) const;
  void LoadCheckpoint(std::filesystem::path const &dir);

private:
  void   Build(std::uint64_t init_seed);
  Tensor RunTrain(Tensor x, std::size_t first, std::size_t last);
  Tensor RunInfer(Tensor x, std::size_t first, std::size_t last) const;
  std::size_t first_above_tap() const noexcept
  {
    return tap_ == kInputTap ? 0 : tap_ + 1;
  }

  NetworkSpec                         spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Shape>                  shapes_;
  std::vector<double>                 lr_mult_;
  std::size_t                         tap_{kInputTap};
  std::size_t                         head_{0};
  bool                                frozen_below_tap_{false};

  std::vector<LayerCache> caches_;
  bool                    cached_{false};
  std::size_t             cached_native_{0};
  std::size_t             cached_total_{0};
  Shape                   cached_logits_shape_;
};

}  // namespace lr

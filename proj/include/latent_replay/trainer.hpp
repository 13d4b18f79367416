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

#include "latent_replay/network.hpp"
#include "latent_replay/replay.hpp"
#include "latent_replay/rng.hpp"
#include "latent_replay/strategies.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lr {

enum class StrategyKind
{
  kNaive,
  kCwrStar,
  kAr1Star,
  kAr1StarFree,
  kDslda,
};

char const  *ToString(StrategyKind kind);
StrategyKind ParseStrategyKind(std::string const &name);

/// Everything train_batch needs to know about one strategy. Learning rates:
/// the first batch trains every layer at lr_first; later batches step the head
/// at lr_head and everything else at lr_other.
struct StrategyConfig
{
  std::string  name;  // label used in outputs, defaults to the strategy kind
  StrategyKind kind{StrategyKind::kNaive};

  std::optional<ReplayKind> replay;  // no replay when empty
  std::string               tap;     // latent tap layer; "" picks the layer under the head
  std::size_t               rm_size{0};

  int         epochs_first{4};
  int         epochs{4};
  std::size_t mb{128};
  std::size_t iterations{0};  // per epoch; 0 covers the batch's native patterns once
  double      lr_first{0.001};
  double      lr_head{0.003};
  double      lr_other{0.0003};

  SiConfig         si{};
  double           dslda_shrinkage{1e-4};
  SparsifierConfig sparsifier{};

  /// Stop updating BRN moving moments below the tap after the first batch.
  bool freeze_moments_below_tap{true};
  /// Keep every BRN layer on its moving moments from the start.
  bool freeze_all_moments{false};
  /// Keep source patterns in a latent memory and report aging drift.
  bool track_drift{false};
};

/// Validates a config against a network; throws kConfig on inconsistencies.
void ValidateStrategy(StrategyConfig const &cfg, Network const &net);

struct BatchReport
{
  int                 batch_index{0};
  std::size_t         minibatches{0};
  std::size_t         n_native{0};
  std::size_t         n_replay{0};
  bool                replay_with_replacement{false};
  std::vector<double> losses;
  double              train_ms{0.0};
  std::size_t         rm_items{0};
  std::optional<double> drift;
  MemoryUpdateReport  memory;
};

/// A network plus the strategy state that evolves with it across batches.
class Learner
{
public:
  Learner(StrategyConfig cfg, Network net, std::uint64_t seed);

  StrategyConfig const &config() const noexcept
  {
    return cfg_;
  }
  Network const &network() const noexcept
  {
    return net_;
  }
  Network &network() noexcept
  {
    return net_;
  }
  ReplayMemory const &memory() const noexcept
  {
    return memory_;
  }
  CwrHead const *cwr() const noexcept
  {
    return cwr_ ? &*cwr_ : nullptr;
  }
  SiState const *si() const noexcept
  {
    return si_ ? &*si_ : nullptr;
  }
  Dslda const *dslda() const noexcept
  {
    return dslda_ ? &*dslda_ : nullptr;
  }
  int batches_seen() const noexcept
  {
    return batches_;
  }

  /// Trains on one incremental batch: head pre-initialization, mini-batch SGD
  /// over native and replayed rows, importance and head consolidation, then the
  /// memory update.
  BatchReport TrainBatch(Tensor const &x, std::span<int const> labels);

  std::vector<int> Predict(Tensor const &x) const;
  double           Accuracy(Tensor const &x, std::span<int const> labels) const;

private:
  bool head_managed() const noexcept;
  bool si_active() const noexcept;

  StrategyConfig               cfg_;
  Network                      net_;
  SeededRng                    rng_;
  ReplayMemory                 memory_;
  std::optional<CwrHead>       cwr_;
  std::optional<SiState>       si_;
  std::optional<Dslda>         dslda_;
  std::size_t                  si_first_{0};
  int                          batches_{0};
};

/// Below-head parameters protected by SI, in network order.
std::vector<Tensor *>       SiParameters(Network &net);
std::vector<Tensor const *> SiParameters(Network const &net);

}  // namespace lr

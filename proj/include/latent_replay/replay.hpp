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
#include "latent_replay/rng.hpp"
#include "latent_replay/tensor.hpp"

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace lr {

enum class ReplayKind
{
  kNative,
  kLatent,
};

char const *ToString(ReplayKind kind);
ReplayKind  ParseReplayKind(std::string const &name);

struct ReplayItem
{
  Tensor payload;  // one pattern (native) or one tap activation volume (latent)
  int    label{0};
  int    origin_batch{0};
  /// Input pattern the latent was computed from; only kept in debug mode for
  /// aging_drift and never counted in the footprint.
  std::optional<Tensor> source;
};

struct MemoryUpdateReport
{
  std::size_t h{0};
  std::size_t added{0};
  std::size_t replaced{0};
  bool        empty_batch{false};  // no-op, the caller should warn
};

/// External rehearsal memory maintained with the random add/replace rule:
///
///   h         = min(floor(capacity / i), |B_i|)
///   R_add     = h patterns drawn uniformly without replacement from B_i
///   R_replace = {} when i == 1, otherwise h items drawn uniformly without
///               replacement from the memory
///   memory    = (memory - R_replace) + R_add
///
/// R_replace is further clamped to the current item count and R_add to the
/// room left after replacement, so |memory| <= capacity always holds.
/// No class balancing is attempted.
class ReplayMemory
{
public:
  ReplayMemory(ReplayKind kind, std::size_t capacity, std::uint64_t seed, std::string tap = "input");

  ReplayKind kind() const noexcept
  {
    return kind_;
  }
  std::size_t capacity() const noexcept
  {
    return capacity_;
  }
  std::size_t size() const noexcept
  {
    return items_.size();
  }
  bool empty() const noexcept
  {
    return items_.empty();
  }
  std::string const &tap() const noexcept
  {
    return tap_;
  }
  std::vector<ReplayItem> const &items() const noexcept
  {
    return items_;
  }
  int last_batch_index() const noexcept
  {
    return last_batch_;
  }
  /// Row shape every payload must have; empty until the first insertion.
  Shape const &payload_shape() const noexcept
  {
    return payload_shape_;
  }

  /// `payloads` is [n, ...]: input patterns for a native memory, tap
  /// activations for a latent one. `sources` (optional, [n, ...] input
  /// patterns) enables aging_drift. batch_index starts at 1 and must strictly
  /// increase across calls.
  MemoryUpdateReport Update(Tensor const &payloads, std::span<int const> labels, int batch_index,
                            Tensor const *sources = nullptr);

  Tensor           Payloads(std::span<std::size_t const> indices) const;
  std::vector<int> Labels(std::span<std::size_t const> indices) const;
  std::vector<int> AllLabels() const;
  /// Number of stored items per origin batch index (index 0 unused).
  std::vector<std::size_t> OccupancyByBatch(int num_batches) const;

  /// Elements held in payloads: |items| * pattern size.
  std::size_t footprint_elements() const noexcept;
  bool        has_sources() const noexcept;

  /// manifest.json (kind, tap, capacity, item count, labels, origin batches,
  /// payload shape, generator state) plus payload.lrt holding [n, ...].
  void                SaveCheckpoint(std::filesystem::path const &dir) const;
  static ReplayMemory LoadCheckpoint(std::filesystem::path const &dir);

private:
  ReplayKind              kind_;
  std::size_t             capacity_;
  std::string             tap_;
  SeededRng               rng_;
  std::vector<ReplayItem> items_;
  Shape                   payload_shape_;
  int                     last_batch_{0};
};

struct MiniBatchPlan
{
  std::size_t n_native{0};
  std::size_t n_replay{0};
};

/// Fixed native/replay proportion for one batch:
/// n_native = round(mb * B / (B + |rm|)), n_replay = mb - n_native.
MiniBatchPlan ComposeMiniBatch(std::size_t batch_size, std::size_t rm_items, std::size_t mb);

struct ReplayDraw
{
  std::vector<std::size_t> indices;
  bool                     with_replacement{false};  // population was too small
};

/// Replay indices for one mini-batch, uniform without replacement when the
/// memory holds at least `count` items, with replacement otherwise.
ReplayDraw DrawReplayIndices(std::size_t rm_items, std::size_t count, SeededRng &rng);

/// Tap activations for a stream of frames on a network whose lower part is
/// frozen. Output i corresponds to frames[i].
std::vector<Tensor> PrecomputeLatents(Network const &net, std::span<Tensor const> frames);

/// Background worker computing tap activations as frames arrive, so head
/// training can start right after acquisition. The network must outlive the
/// pipeline and must not update moments while it is shared.
class LatentPipeline
{
public:
  explicit LatentPipeline(Network const &net);
  ~LatentPipeline();
  LatentPipeline(LatentPipeline const &)            = delete;
  LatentPipeline &operator=(LatentPipeline const &) = delete;

  void Push(Tensor frame);
  /// Blocks until every pushed frame has been processed; returns the latents
  /// in arrival order and resets the pipeline for the next acquisition.
  std::vector<Tensor> Drain();

private:
  void Run();

  Network const          &net_;
  std::mutex              mutex_;
  std::condition_variable cv_;
  std::deque<Tensor>      pending_;
  std::vector<Tensor>     done_;
  std::size_t             pushed_{0};
  bool                    stop_{false};
  std::thread             worker_;
};

struct L1Penalty
{
  double penalty{0.0};
  Tensor dacts;
};

/// penalty = alpha * sum |a|, dacts = alpha * sign(a) with sign(0) = 0.
L1Penalty L1ActivationPenalty(Tensor const &acts, double alpha);

struct SparsifierConfig
{
  double alpha{0.0};
  bool   first_batch_only{true};
};

/// Fraction of entries with |a| > 0.
double FractionNonZero(Tensor const &acts);

/// Mean over items of ||stored - recomputed||_2 / (||recomputed||_2 + eps),
/// where recomputed is the tap activation the current network produces for
/// the item's source pattern. Requires a latent memory with sources.
double AgingDrift(ReplayMemory const &rm, Network const &net);

}  // namespace lr

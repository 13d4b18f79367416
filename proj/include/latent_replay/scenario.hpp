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
#include "latent_replay/tensor.hpp"
#include "latent_replay/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lr {

/// Knobs of the TinyNIC generator. Every object instance is a sum of periodic
/// sinusoids: a class prototype shared by all instances of the class plus an
/// instance-specific part. A session renders one instance while its position
/// and gain follow a bounded random walk, so consecutive frames are highly
/// correlated.
struct TinyNicParams
{
  std::size_t classes{10};
  std::size_t instances_per_class{5};
  std::size_t frames_per_session{50};
  std::size_t first_batch_classes{4};
  std::size_t first_batch_instances{3};  // sessions of each first-batch class
  std::size_t test_frames{10};           // held-out frames per instance
  std::size_t num_batches{0};            // 0 keeps every session
  std::size_t height{16};
  std::size_t width{16};

  std::size_t class_components{6};
  std::size_t instance_components{4};
  std::size_t max_frequency{3};  // cycles per pattern width
  double      instance_strength{0.6};
  double      shift_range{3.0};  // pixels
  double      shift_step{0.2};
  double      gain_range{0.2};
  double      gain_step{0.02};
  double      noise{0.05};
};

/// Throws kConfig on inconsistent parameters.
void ValidateTinyNic(TinyNicParams const &p);

std::string   TinyNicParamsToJson(TinyNicParams const &p);
TinyNicParams ParseTinyNicParams(std::string const &json_text);

struct LabeledSet
{
  Tensor           x;  // [n, ...]
  std::vector<int> y;

  std::size_t size() const noexcept
  {
    return y.size();
  }
};

struct NicScenario
{
  TinyNicParams           params;
  std::uint64_t           seed{0};
  std::size_t             classes{0};
  Shape                   pattern_shape;
  std::vector<LabeledSet> batches;
  LabeledSet              test;

  bool operator==(NicScenario const &other) const;
};

NicScenario GenerateTinyNic(TinyNicParams const &params, std::uint64_t seed);

/// Training batches joined in order.
LabeledSet Union(std::span<LabeledSet const> sets);

/// Dataset manifest:
///   {"format":"lr-dataset-1", "pattern_shape":[...],
///    "parts":[{"file":"x.lrt", "labels":[...]}, ...]}
/// Parts are concatenated in listed order; file paths are relative to the
/// manifest's directory.
void       SaveDataset(LabeledSet const &set, std::filesystem::path const &manifest_path);
LabeledSet LoadDataset(std::filesystem::path const &manifest_path);

/// Writes manifest.json plus one LRT1 file per training batch and one for the
/// test set into `dir`.
void        SaveScenario(NicScenario const &scenario, std::filesystem::path const &dir);
NicScenario LoadScenario(std::filesystem::path const &manifest_path);

struct MetricsRow
{
  int                   batch{0};
  std::optional<double> accuracy;  // empty on batches skipped by eval_every
  double                train_ms{0.0};
  std::size_t           rm_items{0};
  std::optional<double> drift;
};

struct ProtocolOptions
{
  std::size_t eval_every{1};  // the last batch is always evaluated
  bool        record_wall_time{false};
};

/// Trains on each batch in order and scores top-1 accuracy over all classes
/// on the fixed test set.
std::vector<MetricsRow> RunProtocol(Learner &learner, NicScenario const &scenario,
                                    ProtocolOptions const &options = {});
std::vector<MetricsRow> RunProtocol(Network net, StrategyConfig const &cfg, NicScenario const &scenario,
                                    std::uint64_t seed, ProtocolOptions const &options = {});

struct CumulativeConfig
{
  int         epochs{4};
  std::size_t mb{128};
  double      lr{0.001};
};

/// One joint training on the union of all batches; the accuracy ceiling the
/// continual strategies are compared with.
MetricsRow CumulativeBaseline(Network net, NicScenario const &scenario, CumulativeConfig const &cfg,
                              std::uint64_t seed);

/// Header `batch,accuracy,train_ms,rm_items,drift`, one line per row.
std::string FormatMetricsCsv(std::span<MetricsRow const> rows);

/// Mean Pearson correlation between consecutive frames of a session.
double ConsecutiveFrameCorrelation(Tensor const &session);
double PearsonCorrelation(std::span<float const> a, std::span<float const> b);

}  // namespace lr

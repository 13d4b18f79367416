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
#include "latent_replay/scenario.hpp"
#include "latent_replay/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lr {

/// One experiment document:
///
///   {
///     "network":  "nets/tinynic.json",
///     "scenario": {"generator": {...TinyNIC params...}, "seed": 7}
///                 or {"manifest": "scenario/manifest.json"},
///     "seeds":    [1, 2, 3],
///     "output":   "runs/default",
///     "eval_every": 1,
///     "record_wall_time": false,
///     "cumulative": {"epochs": 4, "mb": 128, "lr": 0.001},
///     "strategies": [{"name": "...", "strategy": "ar1*free", "replay": "latent",
///                     "tap": "relu2", "rm_size": 500, ...}, ...]
///   }
///
/// Relative paths resolve against the config file's directory. Without a
/// scenario seed, each run seed also seeds the scenario. Unknown keys are
/// rejected.
struct ExperimentConfig
{
  std::filesystem::path               network_path;
  std::optional<TinyNicParams>        generator;
  std::optional<std::uint64_t>        scenario_seed;
  std::optional<std::filesystem::path> manifest_path;
  std::vector<std::uint64_t>          seeds;
  std::filesystem::path               output;
  ProtocolOptions                     protocol;
  std::optional<CumulativeConfig>     cumulative;
  std::vector<StrategyConfig>         strategies;
};

ExperimentConfig ParseExperimentConfig(std::string const &json_text, std::filesystem::path const &base_dir);
ExperimentConfig LoadExperimentConfig(std::filesystem::path const &path);

/// Default output directory name for a strategy kind ("*" spelled "star").
std::string DefaultStrategyName(StrategyKind kind);

struct RunResult
{
  std::string             strategy;
  std::uint64_t           seed{0};
  std::vector<MetricsRow> rows;
};

struct ExperimentResult
{
  std::vector<RunResult> runs;        // ordered by (seed, strategy order)
  std::vector<RunResult> cumulative;  // ordered by seed
};

/// Worker threads to use: LR_THREADS when set and positive, otherwise the
/// hardware concurrency (at least 1).
unsigned WorkerCount();

/// Runs every (seed, strategy) pair plus the cumulative baseline, spreading
/// runs over `threads` workers. Results do not depend on the thread count.
ExperimentResult RunExperiment(ExperimentConfig const &cfg, unsigned threads);

/// <out>/<strategy>/seed_<seed>/metrics.csv for each run, and <out>/summary.json.
void        WriteExperimentOutputs(ExperimentConfig const &cfg, ExperimentResult const &result,
                                   std::filesystem::path const &out);
std::string SummaryJson(ExperimentConfig const &cfg, ExperimentResult const &result);

/// Seed for network initialization and for the learner, derived from a run seed.
std::uint64_t InitSeed(std::uint64_t run_seed);
std::uint64_t TrainSeed(std::uint64_t run_seed);

}  // namespace lr

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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lr {

struct LayerCost
{
  std::string   name;
  std::uint64_t neurons{0};
  std::uint64_t ops{0};
  std::uint64_t weights{0};
};

/// Per-layer neurons, forward ops and weights in network order. The first row
/// is normally the input, with zero ops.
class LayerCostTable
{
public:
  LayerCostTable() = default;
  explicit LayerCostTable(std::vector<LayerCost> rows);

  std::vector<LayerCost> const &rows() const noexcept
  {
    return rows_;
  }
  std::size_t   index_of(std::string const &name) const;
  std::uint64_t total_ops() const noexcept
  {
    return total_ops_;
  }
  std::uint64_t total_weights() const noexcept;

private:
  std::vector<LayerCost> rows_;
  std::uint64_t          total_ops_{0};
};

/// CSV with header `name,neurons,ops,weights`; "-" reads as 0.
LayerCostTable ParseCostTable(std::string const &csv_text);
LayerCostTable LoadCostTable(std::filesystem::path const &path);

/// Cost table of one of our networks, with a leading "input" row. Ops count
/// multiply-adds plus bias/elementwise work:
///   conv/dwconv  out_elems * (k*k*c_in/groups + bias)
///   dense        in*out + out
///   avgpool      out * h * w
///   relu         neurons;  brn  2 * neurons;  flatten  0
LayerCostTable CostTableFromNetwork(Network const &net);

/// 100 * (ops of the rows strictly after `replay_layer`) / total ops.
double        ComputationPct(LayerCostTable const &table, std::string const &replay_layer);
std::uint64_t PatternSize(LayerCostTable const &table, std::string const &layer);

/// rm_size * pattern_elems * bytes_per_elem; kArithmetic on overflow.
std::uint64_t MemoryFootprint(std::uint64_t rm_size, std::uint64_t pattern_elems, std::uint64_t bytes_per_elem);

/// Megabytes the way storage figures are usually quoted for replay buffers:
/// KB = 1024 bytes, MB = 1000 KB. 1500 * 32768 bytes renders as "48 MB".
std::string FormatMegabytes(std::uint64_t bytes);

struct TradeoffRow
{
  std::string   layer;
  double        computation_pct{0.0};
  std::uint64_t pattern_size{0};
  std::uint64_t footprint_bytes{0};
};

std::vector<TradeoffRow> TradeoffTable(LayerCostTable const &table, std::span<std::string const> candidates,
                                       std::uint64_t rm_size, std::uint64_t bytes_per_elem = 1);

/// Header `layer,computation_pct,pattern_size,footprint_bytes,footprint_mb`.
std::string FormatTradeoffCsv(std::span<TradeoffRow const> rows);

}  // namespace lr

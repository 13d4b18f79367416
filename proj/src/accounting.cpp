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

#include "latent_replay/accounting.hpp"

#include "latent_replay/error.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace lr {

namespace {

std::string Trim(std::string s)
{
  auto const first = s.find_first_not_of(" \t\r");
  auto const last  = s.find_last_not_of(" \t\r");
  return first == std::string::npos ? std::string{} : s.substr(first, last - first + 1);
}

std::uint64_t ParseCount(std::string const &field, std::size_t line)
{
  std::string const v = Trim(field);
  if (v == "-")
  {
    return 0;
  }
  Require(!v.empty() && v.find_first_not_of("0123456789") == std::string::npos, ErrorCode::kFormat,
          "line " + std::to_string(line) + ": '" + v + "' is not a non-negative integer");
  try
  {
    return std::stoull(v);
  }
  catch (std::out_of_range const &)
  {
    Fail(ErrorCode::kFormat, "line " + std::to_string(line) + ": '" + v + "' is too large");
  }
}

std::uint64_t CheckedMul(std::uint64_t a, std::uint64_t b)
{
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
  {
    Fail(ErrorCode::kArithmetic, std::to_string(a) + " * " + std::to_string(b) + " overflows 64 bits");
  }
  return a * b;
}

std::uint64_t LayerOps(Layer const &layer, Shape const &in, Shape const &out)
{
  std::uint64_t const neurons = ShapeSize(out);
  switch (layer.kind())
  {
  case LayerKind::kConv:
  case LayerKind::kDwConv: {
    auto const &conv  = static_cast<ConvLayer const &>(layer);
    std::uint64_t patch = conv.weight.row_size() + (conv.bias.empty() ? 0 : 1);
    return neurons * patch;
  }
  case LayerKind::kDense:
    return ShapeSize(in) * neurons + neurons;
  case LayerKind::kAvgPool:
    return ShapeSize(in);
  case LayerKind::kRelu:
    return neurons;
  case LayerKind::kBrn:
    return 2 * neurons;
  case LayerKind::kFlatten:
    return 0;
  }
  return 0;
}

std::uint64_t LayerWeights(Layer const &layer)
{
  std::uint64_t total = 0;
  for (Tensor const *p : layer.Params())
  {
    total += p->size();
  }
  return total;
}

}  // namespace

LayerCostTable::LayerCostTable(std::vector<LayerCost> rows)
  : rows_(std::move(rows))
{
  std::set<std::string> seen;
  for (LayerCost const &row : rows_)
  {
    Require(!row.name.empty(), ErrorCode::kFormat, "cost table row without a name");
    Require(seen.insert(row.name).second, ErrorCode::kFormat, "duplicate layer '" + row.name + "' in cost table");
    Require(total_ops_ <= std::numeric_limits<std::uint64_t>::max() - row.ops, ErrorCode::kArithmetic,
            "total ops overflow 64 bits");
    total_ops_ += row.ops;
  }
}

std::size_t LayerCostTable::index_of(std::string const &name) const
{
  for (std::size_t i = 0; i < rows_.size(); ++i)
  {
    if (rows_[i].name == name)
    {
      return i;
    }
  }
  Fail(ErrorCode::kLookup, "no layer named '" + name + "' in cost table");
}

std::uint64_t LayerCostTable::total_weights() const noexcept
{
  std::uint64_t total = 0;
  for (LayerCost const &row : rows_)
  {
    total += row.weights;
  }
  return total;
}

LayerCostTable ParseCostTable(std::string const &csv_text)
{
  std::istringstream     is(csv_text);
  std::string            line;
  std::size_t            number = 0;
  bool                   header = false;
  std::vector<LayerCost> rows;
  while (std::getline(is, line))
  {
    ++number;
    if (Trim(line).empty() || Trim(line)[0] == '#')
    {
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream        ls(line);
    std::string              field;
    while (std::getline(ls, field, ','))
    {
      fields.push_back(Trim(field));
    }
    Require(fields.size() == 4, ErrorCode::kFormat,
            "line " + std::to_string(number) + ": expected 4 fields, got " + std::to_string(fields.size()));
    if (!header)
    {
      Require(fields[0] == "name" && fields[1] == "neurons" && fields[2] == "ops" && fields[3] == "weights",
              ErrorCode::kFormat, "cost table header must be name,neurons,ops,weights");
      header = true;
      continue;
    }
    rows.push_back({fields[0], ParseCount(fields[1], number), ParseCount(fields[2], number),
                    ParseCount(fields[3], number)});
  }
  Require(header, ErrorCode::kFormat, "cost table is empty");
  return LayerCostTable(std::move(rows));
}

LayerCostTable LoadCostTable(std::filesystem::path const &path)
{
  std::ifstream is(path);
  Require(is.good(), ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return ParseCostTable(buf.str());
}

LayerCostTable CostTableFromNetwork(Network const &net)
{
  std::vector<LayerCost> rows;
  rows.push_back({"input", ShapeSize(net.input_shape()), 0, 0});
  for (std::size_t i = 0; i < net.num_layers(); ++i)
  {
    Shape const &in  = i == 0 ? net.input_shape() : net.output_shape(i - 1);
    Shape const &out = net.output_shape(i);
    Layer const &l   = net.layer(i);
    rows.push_back({l.name(), ShapeSize(out), LayerOps(l, in, out), LayerWeights(l)});
  }
  return LayerCostTable(std::move(rows));
}

double ComputationPct(LayerCostTable const &table, std::string const &replay_layer)
{
  std::size_t const at = table.index_of(replay_layer);
  Require(table.total_ops() > 0, ErrorCode::kArithmetic, "cost table has zero total ops");
  std::uint64_t above = 0;
  for (std::size_t i = at + 1; i < table.rows().size(); ++i)
  {
    above += table.rows()[i].ops;
  }
  return 100.0 * static_cast<double>(above) / static_cast<double>(table.total_ops());
}

std::uint64_t PatternSize(LayerCostTable const &table, std::string const &layer)
{
  return table.rows()[table.index_of(layer)].neurons;
}

std::uint64_t MemoryFootprint(std::uint64_t rm_size, std::uint64_t pattern_elems, std::uint64_t bytes_per_elem)
{
  return CheckedMul(CheckedMul(rm_size, pattern_elems), bytes_per_elem);
}

std::string FormatMegabytes(std::uint64_t bytes)
{
  double const mb = static_cast<double>(bytes) / (1024.0 * 1000.0);
  char         buf[64];
  if (mb == static_cast<double>(static_cast<std::uint64_t>(mb)))
  {
    std::snprintf(buf, sizeof buf, "%.0f MB", mb);
  }
  else
  {
    std::snprintf(buf, sizeof buf, "%.2f MB", mb);
  }
  return buf;
}

std::vector<TradeoffRow> TradeoffTable(LayerCostTable const &table, std::span<std::string const> candidates,
                                       std::uint64_t rm_size, std::uint64_t bytes_per_elem)
{
  std::vector<TradeoffRow> out;
  for (std::string const &name : candidates)
  {
    TradeoffRow row;
    row.layer           = name;
    row.computation_pct = ComputationPct(table, name);
    row.pattern_size    = PatternSize(table, name);
    row.footprint_bytes = MemoryFootprint(rm_size, row.pattern_size, bytes_per_elem);
    out.push_back(row);
  }
  return out;
}

std::string FormatTradeoffCsv(std::span<TradeoffRow const> rows)
{
  std::ostringstream os;
  os << "layer,computation_pct,pattern_size,footprint_bytes,footprint_mb\n";
  for (TradeoffRow const &r : rows)
  {
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.3f", r.computation_pct);
    std::string mb = FormatMegabytes(r.footprint_bytes);
    mb             = mb.substr(0, mb.size() - 3);
    os << r.layer << ',' << pct << ',' << r.pattern_size << ',' << r.footprint_bytes << ',' << mb << '\n';
  }
  return os.str();
}

}  // namespace lr

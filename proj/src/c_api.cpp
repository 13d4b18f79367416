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

#include "latent_replay/latent_replay.h"

#include "latent_replay/accounting.hpp"
#include "latent_replay/error.hpp"
#include "latent_replay/experiment.hpp"
#include "latent_replay/replay.hpp"
#include "latent_replay/scenario.hpp"

#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

struct lr_cost_table
{
  lr::LayerCostTable table;
};

struct lr_network
{
  lr::Network net;
};

namespace {

thread_local std::string g_last_error;

lr_status FromCode(lr::ErrorCode code)
{
  switch (code)
  {
  case lr::ErrorCode::kConfig:
    return LR_ERR_CONFIG;
  case lr::ErrorCode::kIo:
    return LR_ERR_IO;
  case lr::ErrorCode::kFormat:
    return LR_ERR_FORMAT;
  case lr::ErrorCode::kShape:
    return LR_ERR_SHAPE;
  case lr::ErrorCode::kLookup:
    return LR_ERR_LOOKUP;
  case lr::ErrorCode::kArithmetic:
    return LR_ERR_ARITH;
  default:
    return LR_ERR_RUNTIME;
  }
}

template <typename F>
lr_status Guard(F &&body)
{
  try
  {
    body();
    g_last_error.clear();
    return LR_OK;
  }
  catch (lr::Error const &e)
  {
    g_last_error = std::string(lr::ToString(e.code())) + ": " + e.what();
    return FromCode(e.code());
  }
  catch (std::filesystem::filesystem_error const &e)
  {
    g_last_error = e.what();
    return LR_ERR_IO;
  }
  catch (std::bad_alloc const &)
  {
    g_last_error = "out of memory";
    return LR_ERR_RUNTIME;
  }
  catch (std::exception const &e)
  {
    g_last_error = e.what();
    return LR_ERR_RUNTIME;
  }
}

void NotNull(void const *p, char const *what)
{
  if (p == nullptr)
  {
    throw std::invalid_argument(std::string(what) + " is NULL");
  }
}

lr_status ArgError(char const *message)
{
  g_last_error = message;
  return LR_ERR_ARG;
}

}  // namespace

extern "C" {

char const *lr_last_error(void)
{
  return g_last_error.c_str();
}

char const *lr_status_name(lr_status status)
{
  switch (status)
  {
  case LR_OK:
    return "ok";
  case LR_ERR_CONFIG:
    return "config error";
  case LR_ERR_RUNTIME:
    return "runtime error";
  case LR_ERR_IO:
    return "io error";
  case LR_ERR_FORMAT:
    return "format error";
  case LR_ERR_SHAPE:
    return "shape error";
  case LR_ERR_LOOKUP:
    return "lookup error";
  case LR_ERR_ARITH:
    return "arithmetic error";
  case LR_ERR_ARG:
    return "invalid argument";
  case LR_ERR_BUFFER:
    return "buffer too small";
  }
  return "unknown status";
}

char const *lr_version(void)
{
  return "1.0.0";
}

lr_status lr_cost_table_load(char const *csv_path, lr_cost_table **out)
{
  if (csv_path == nullptr || out == nullptr)
  {
    return ArgError("lr_cost_table_load: NULL argument");
  }
  *out = nullptr;
  return Guard([&] { *out = new lr_cost_table{lr::LoadCostTable(csv_path)}; });
}

lr_status lr_cost_table_parse(char const *csv_text, lr_cost_table **out)
{
  if (csv_text == nullptr || out == nullptr)
  {
    return ArgError("lr_cost_table_parse: NULL argument");
  }
  *out = nullptr;
  return Guard([&] { *out = new lr_cost_table{lr::ParseCostTable(csv_text)}; });
}

void lr_cost_table_free(lr_cost_table *table)
{
  delete table;
}

lr_status lr_cost_table_size(lr_cost_table const *table, size_t *rows)
{
  if (table == nullptr || rows == nullptr)
  {
    return ArgError("lr_cost_table_size: NULL argument");
  }
  *rows = table->table.rows().size();
  g_last_error.clear();
  return LR_OK;
}

lr_status lr_cost_table_name(lr_cost_table const *table, size_t row, char const **name)
{
  if (table == nullptr || name == nullptr)
  {
    return ArgError("lr_cost_table_name: NULL argument");
  }
  if (row >= table->table.rows().size())
  {
    return ArgError("lr_cost_table_name: row out of range");
  }
  *name = table->table.rows()[row].name.c_str();
  g_last_error.clear();
  return LR_OK;
}

lr_status lr_computation_pct(lr_cost_table const *table, char const *replay_layer, double *pct)
{
  if (table == nullptr || replay_layer == nullptr || pct == nullptr)
  {
    return ArgError("lr_computation_pct: NULL argument");
  }
  return Guard([&] { *pct = lr::ComputationPct(table->table, replay_layer); });
}

lr_status lr_pattern_size(lr_cost_table const *table, char const *layer, uint64_t *elements)
{
  if (table == nullptr || layer == nullptr || elements == nullptr)
  {
    return ArgError("lr_pattern_size: NULL argument");
  }
  return Guard([&] { *elements = lr::PatternSize(table->table, layer); });
}

lr_status lr_memory_footprint(uint64_t rm_size, uint64_t pattern_elems, uint64_t bytes_per_elem, uint64_t *bytes)
{
  if (bytes == nullptr)
  {
    return ArgError("lr_memory_footprint: NULL argument");
  }
  return Guard([&] { *bytes = lr::MemoryFootprint(rm_size, pattern_elems, bytes_per_elem); });
}

lr_status lr_tradeoff_csv(lr_cost_table const *table, char const *const *candidates, size_t count,
                          uint64_t rm_size, uint64_t bytes_per_elem, char *buffer, size_t capacity, size_t *needed)
{
  if (table == nullptr)
  {
    return ArgError("lr_tradeoff_csv: NULL argument");
  }
  if (buffer == nullptr && capacity > 0)
  {
    return ArgError("lr_tradeoff_csv: NULL buffer with non-zero capacity");
  }
  std::string csv;
  lr_status   status = Guard([&] {
    std::vector<std::string> names;
    if (candidates == nullptr)
    {
      for (lr::LayerCost const &row : table->table.rows())
      {
        names.push_back(row.name);
      }
    }
    else
    {
      for (size_t i = 0; i < count; ++i)
      {
        NotNull(candidates[i], "candidate layer name");
        names.emplace_back(candidates[i]);
      }
    }
    auto const rows = lr::TradeoffTable(table->table, names, rm_size, bytes_per_elem);
    csv             = lr::FormatTradeoffCsv(rows);
  });
  if (status != LR_OK)
  {
    return status;
  }
  if (needed != nullptr)
  {
    *needed = csv.size() + 1;
  }
  if (capacity < csv.size() + 1)
  {
    if (capacity > 0)
    {
      buffer[0] = '\0';
    }
    g_last_error = "lr_tradeoff_csv: buffer holds " + std::to_string(capacity) + " bytes, " +
                   std::to_string(csv.size() + 1) + " needed";
    return LR_ERR_BUFFER;
  }
  std::memcpy(buffer, csv.c_str(), csv.size() + 1);
  return LR_OK;
}

lr_status lr_compose_minibatch(size_t batch_size, size_t rm_items, size_t mb, size_t *n_native, size_t *n_replay)
{
  if (n_native == nullptr || n_replay == nullptr)
  {
    return ArgError("lr_compose_minibatch: NULL argument");
  }
  return Guard([&] {
    lr::MiniBatchPlan const plan = lr::ComposeMiniBatch(batch_size, rm_items, mb);
    *n_native                    = plan.n_native;
    *n_replay                    = plan.n_replay;
  });
}

lr_status lr_network_load(char const *spec_path, uint64_t init_seed, lr_network **out)
{
  if (spec_path == nullptr || out == nullptr)
  {
    return ArgError("lr_network_load: NULL argument");
  }
  *out = nullptr;
  return Guard([&] { *out = new lr_network{lr::Network(lr::LoadNetworkSpec(spec_path), init_seed)}; });
}

void lr_network_free(lr_network *net)
{
  delete net;
}

lr_status lr_network_dims(lr_network const *net, size_t *input_elems, size_t *classes)
{
  if (net == nullptr || input_elems == nullptr || classes == nullptr)
  {
    return ArgError("lr_network_dims: NULL argument");
  }
  *input_elems = lr::ShapeSize(net->net.input_shape());
  *classes     = net->net.classes();
  g_last_error.clear();
  return LR_OK;
}

lr_status lr_network_forward(lr_network const *net, float const *input, size_t n, float *logits)
{
  if (net == nullptr || input == nullptr || logits == nullptr)
  {
    return ArgError("lr_network_forward: NULL argument");
  }
  if (n == 0)
  {
    return ArgError("lr_network_forward: empty batch");
  }
  return Guard([&] {
    lr::Shape const    row   = net->net.input_shape();
    std::size_t const  elems = lr::ShapeSize(row);
    std::vector<float> data(input, input + n * elems);
    lr::Tensor const   x(lr::WithBatch(n, row), std::move(data));
    lr::Tensor const   y = net->net.Infer(x);
    std::memcpy(logits, y.data().data(), y.size() * sizeof(float));
  });
}

lr_status lr_experiment_run(char const *config_path, char const *out_dir, uint64_t const *seed)
{
  if (config_path == nullptr)
  {
    return ArgError("lr_experiment_run: NULL config path");
  }
  return Guard([&] {
    lr::ExperimentConfig cfg = lr::LoadExperimentConfig(config_path);
    if (seed != nullptr)
    {
      cfg.seeds = {*seed};
    }
    std::filesystem::path const out = out_dir != nullptr ? std::filesystem::path(out_dir) : cfg.output;
    lr::ExperimentResult const  result = lr::RunExperiment(cfg, lr::WorkerCount());
    lr::WriteExperimentOutputs(cfg, result, out);
  });
}

lr_status lr_scenario_generate(char const *params_path, uint64_t seed, char const *out_dir)
{
  if (out_dir == nullptr)
  {
    return ArgError("lr_scenario_generate: NULL output directory");
  }
  return Guard([&] {
    lr::TinyNicParams params;
    if (params_path != nullptr)
    {
      std::ifstream is(params_path);
      lr::Require(is.good(), lr::ErrorCode::kIo, std::string("cannot open ") + params_path);
      std::stringstream buf;
      buf << is.rdbuf();
      params = lr::ParseTinyNicParams(buf.str());
    }
    lr::SaveScenario(lr::GenerateTinyNic(params, seed), out_dir);
  });
}

}  // extern "C"

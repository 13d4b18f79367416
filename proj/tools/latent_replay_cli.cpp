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

// Command-line front end over the latent_replay C API.
//
//   latent-replay run --config exp.json [--seed N] [--out DIR]
//   latent-replay scenario [--config params.json] --seed N --out DIR
//   latent-replay tradeoff costs.csv --rm-size N [--layers a,b,...] [--bytes-per-elem B]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include "latent_replay/latent_replay.h"

#include "CLI11.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitConfig  = 1;
constexpr int kExitRuntime = 2;

int Report(lr_status status)
{
  if (status == LR_OK)
  {
    return 0;
  }
  std::cerr << "error: " << lr_last_error() << '\n';
  return status == LR_ERR_CONFIG || status == LR_ERR_ARG ? kExitConfig : kExitRuntime;
}

std::vector<std::string> SplitList(std::string const &text)
{
  std::vector<std::string> out;
  std::stringstream        ss(text);
  std::string              item;
  while (std::getline(ss, item, ','))
  {
    if (!item.empty())
    {
      out.push_back(item);
    }
  }
  return out;
}

int Run(std::string const &config, std::optional<std::uint64_t> seed, std::string const &out)
{
  if (!std::filesystem::exists(config))
  {
    std::cerr << "error: config file " << config << " does not exist\n";
    return kExitConfig;
  }
  return Report(lr_experiment_run(config.c_str(), out.empty() ? nullptr : out.c_str(), seed ? &*seed : nullptr));
}

int Scenario(std::string const &params, std::uint64_t seed, std::string const &out)
{
  if (!params.empty() && !std::filesystem::exists(params))
  {
    std::cerr << "error: parameter file " << params << " does not exist\n";
    return kExitConfig;
  }
  return Report(lr_scenario_generate(params.empty() ? nullptr : params.c_str(), seed, out.c_str()));
}

int Tradeoff(std::string const &fixture, std::uint64_t rm_size, std::optional<std::string> const &layers,
             std::uint64_t bytes_per_elem)
{
  lr_cost_table *table  = nullptr;
  lr_status      status = lr_cost_table_load(fixture.c_str(), &table);
  if (status != LR_OK)
  {
    return Report(status);
  }

  std::vector<std::string> names;
  std::vector<char const *> ptrs;
  if (layers)
  {
    names = SplitList(*layers);
    for (std::string const &n : names)
    {
      ptrs.push_back(n.c_str());
    }
  }
  char const *const *candidates = layers ? ptrs.data() : nullptr;
  static char const *const kNone[1] = {nullptr};
  if (layers && ptrs.empty())
  {
    candidates = kNone;
  }

  std::size_t needed = 0;
  status = lr_tradeoff_csv(table, candidates, ptrs.size(), rm_size, bytes_per_elem, nullptr, 0, &needed);
  if (status == LR_ERR_BUFFER)
  {
    std::vector<char> buffer(needed);
    status = lr_tradeoff_csv(table, candidates, ptrs.size(), rm_size, bytes_per_elem, buffer.data(),
                             buffer.size(), &needed);
    if (status == LR_OK)
    {
      std::fputs(buffer.data(), stdout);
    }
  }
  lr_cost_table_free(table);
  return Report(status);
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Latent replay continual learning experiments"};
  app.require_subcommand(1);

  std::string                  run_config;
  std::optional<std::uint64_t> run_seed;
  std::string                  run_out;
  CLI::App *run = app.add_subcommand("run", "Run an experiment config and write metrics");
  run->add_option("--config", run_config, "Experiment config (JSON)")->required();
  run->add_option("--seed", run_seed, "Run only this seed");
  run->add_option("--out", run_out, "Output directory (overrides the config)");

  std::string   scen_params;
  std::uint64_t scen_seed{0};
  std::string   scen_out;
  CLI::App *scenario = app.add_subcommand("scenario", "Generate a TinyNIC scenario on disk");
  scenario->add_option("--config", scen_params, "Generator parameters (JSON); defaults when omitted");
  scenario->add_option("--seed", scen_seed, "Generator seed")->required();
  scenario->add_option("--out", scen_out, "Output directory")->required();

  std::string                fixture;
  std::uint64_t              rm_size{0};
  std::optional<std::string> layers;
  std::uint64_t              bytes_per_elem{1};
  CLI::App *tradeoff = app.add_subcommand("tradeoff", "Print the computation/storage trade-off CSV");
  tradeoff->add_option("fixture", fixture, "Per-layer cost table (CSV name,neurons,ops,weights)")->required();
  tradeoff->add_option("--rm-size", rm_size, "Replay memory capacity")->required();
  tradeoff->add_option("--layers", layers, "Comma-separated candidate layers (default: every row)");
  tradeoff->add_option("--bytes-per-elem", bytes_per_elem, "Storage bytes per stored element");

  try
  {
    app.parse(argc, argv);
  }
  catch (CLI::ParseError const &e)
  {
    int const code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*run)
  {
    return Run(run_config, run_seed, run_out);
  }
  if (*scenario)
  {
    return Scenario(scen_params, scen_seed, scen_out);
  }
  return Tradeoff(fixture, rm_size, layers, bytes_per_elem);
}

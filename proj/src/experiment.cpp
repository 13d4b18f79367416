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

#include "latent_replay/experiment.hpp"

#include "latent_replay/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace lr {

namespace {

using nlohmann::json;

void CheckKeys(json const &j, std::set<std::string> const &allowed, std::string const &where)
{
  Require(j.is_object(), ErrorCode::kConfig, where + " must be a JSON object");
  for (auto const &[key, value] : j.items())
  {
    Require(allowed.count(key) > 0, ErrorCode::kConfig, "unknown key '" + key + "' in " + where);
  }
}

std::filesystem::path Resolve(std::filesystem::path const &base, std::string const &p)
{
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

bool SafeName(std::string const &name)
{
  return !name.empty() && name != "." && name != ".." &&
         name.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-") ==
             std::string::npos;
}

SiConfig ParseSi(json const &j)
{
  CheckKeys(j, {"lambda", "xi", "w1", "wi", "max_f"}, "si block");
  SiConfig si;
  si.lambda = j.value("lambda", si.lambda);
  si.xi     = j.value("xi", si.xi);
  si.w1     = j.value("w1", si.w1);
  si.wi     = j.value("wi", si.wi);
  si.max_f  = j.value("max_f", si.max_f);
  Require(si.xi > 0.0, ErrorCode::kConfig, "si.xi must be positive");
  Require(si.max_f >= 0.0 && si.lambda >= 0.0, ErrorCode::kConfig, "si.max_f and si.lambda must be non-negative");
  return si;
}

StrategyConfig ParseStrategy(json const &j)
{
  CheckKeys(j,
            {"name", "strategy", "replay", "tap", "rm_size", "epochs_first", "epochs", "mb", "iterations",
             "lr_first", "lr_head", "lr_other", "si", "dslda_shrinkage", "sparsifier",
             "freeze_moments_below_tap", "freeze_all_moments", "track_drift"},
            "strategy block");
  Require(j.contains("strategy"), ErrorCode::kConfig, "strategy block needs a 'strategy' field");
  StrategyConfig s;
  s.kind = ParseStrategyKind(j.at("strategy").get<std::string>());
  s.name = j.value("name", DefaultStrategyName(s.kind));
  Require(SafeName(s.name), ErrorCode::kConfig,
          "strategy name '" + s.name + "' must use only letters, digits, '_', '-' and '.'");
  if (j.contains("replay"))
  {
    std::string const replay = j.at("replay").get<std::string>();
    if (replay != "none")
    {
      try
      {
        s.replay = ParseReplayKind(replay);
      }
      catch (Error const &e)
      {
        Fail(ErrorCode::kConfig, e.what());
      }
    }
  }
  s.tap          = j.value("tap", s.tap);
  s.rm_size      = j.value("rm_size", s.rm_size);
  s.epochs_first = j.value("epochs_first", s.epochs_first);
  s.epochs       = j.value("epochs", s.epochs);
  s.mb           = j.value("mb", s.mb);
  s.iterations   = j.value("iterations", s.iterations);
  s.lr_first     = j.value("lr_first", s.lr_first);
  s.lr_head      = j.value("lr_head", s.lr_head);
  s.lr_other     = j.value("lr_other", s.lr_other);
  if (j.contains("si"))
  {
    s.si = ParseSi(j.at("si"));
  }
  s.dslda_shrinkage = j.value("dslda_shrinkage", s.dslda_shrinkage);
  if (j.contains("sparsifier"))
  {
    json const &sp = j.at("sparsifier");
    CheckKeys(sp, {"alpha", "first_batch_only"}, "sparsifier block");
    s.sparsifier.alpha            = sp.value("alpha", s.sparsifier.alpha);
    s.sparsifier.first_batch_only = sp.value("first_batch_only", s.sparsifier.first_batch_only);
  }
  s.freeze_moments_below_tap = j.value("freeze_moments_below_tap", s.freeze_moments_below_tap);
  s.freeze_all_moments       = j.value("freeze_all_moments", s.freeze_all_moments);
  s.track_drift              = j.value("track_drift", s.track_drift);
  return s;
}

std::string Fixed(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double FinalAccuracy(std::vector<MetricsRow> const &rows)
{
  return rows.empty() || !rows.back().accuracy ? 0.0 : *rows.back().accuracy;
}

double MeanAccuracy(std::vector<MetricsRow> const &rows)
{
  double      sum = 0.0;
  std::size_t n   = 0;
  for (MetricsRow const &r : rows)
  {
    if (r.accuracy)
    {
      sum += *r.accuracy;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

void WriteFile(std::filesystem::path const &path, std::string const &text)
{
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  Require(os.good(), ErrorCode::kIo, "cannot write " + path.string());
  os << text;
  Require(os.good(), ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace

std::string DefaultStrategyName(StrategyKind kind)
{
  std::string name = ToString(kind);
  std::string out;
  for (char c : name)
  {
    out += c == '*' ? std::string("star") : std::string(1, c);
  }
  return out;
}

std::uint64_t InitSeed(std::uint64_t run_seed)
{
  std::uint64_t state = run_seed;
  return SplitMix64(state);
}

std::uint64_t TrainSeed(std::uint64_t run_seed)
{
  std::uint64_t state = run_seed;
  SplitMix64(state);
  return SplitMix64(state);
}

ExperimentConfig ParseExperimentConfig(std::string const &json_text, std::filesystem::path const &base_dir)
{
  json j;
  try
  {
    j = json::parse(json_text);
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kConfig, std::string("experiment config: ") + e.what());
  }
  try
  {
    CheckKeys(j,
              {"network", "scenario", "seeds", "output", "eval_every", "record_wall_time", "cumulative",
               "strategies"},
              "experiment config");
    ExperimentConfig cfg;
    Require(j.contains("network"), ErrorCode::kConfig, "experiment config needs 'network'");
    cfg.network_path = Resolve(base_dir, j.at("network").get<std::string>());

    Require(j.contains("scenario"), ErrorCode::kConfig, "experiment config needs 'scenario'");
    json const &sc = j.at("scenario");
    CheckKeys(sc, {"generator", "seed", "manifest"}, "scenario block");
    Require(sc.contains("generator") != sc.contains("manifest"), ErrorCode::kConfig,
            "scenario block needs exactly one of 'generator' or 'manifest'");
    if (sc.contains("generator"))
    {
      cfg.generator = ParseTinyNicParams(sc.at("generator").dump());
      if (sc.contains("seed"))
      {
        cfg.scenario_seed = sc.at("seed").get<std::uint64_t>();
      }
    }
    else
    {
      Require(!sc.contains("seed"), ErrorCode::kConfig, "a scenario manifest already fixes its seed");
      cfg.manifest_path = Resolve(base_dir, sc.at("manifest").get<std::string>());
    }

    cfg.seeds = j.value("seeds", std::vector<std::uint64_t>{0});
    Require(!cfg.seeds.empty(), ErrorCode::kConfig, "seeds list is empty");
    std::set<std::uint64_t> unique_seeds(cfg.seeds.begin(), cfg.seeds.end());
    Require(unique_seeds.size() == cfg.seeds.size(), ErrorCode::kConfig, "seeds list has duplicates");

    cfg.output                    = Resolve(base_dir, j.value("output", std::string("runs")));
    cfg.protocol.eval_every       = j.value("eval_every", cfg.protocol.eval_every);
    cfg.protocol.record_wall_time = j.value("record_wall_time", cfg.protocol.record_wall_time);
    Require(cfg.protocol.eval_every >= 1, ErrorCode::kConfig, "eval_every must be at least 1");

    if (j.contains("cumulative"))
    {
      json const &cu = j.at("cumulative");
      CheckKeys(cu, {"epochs", "mb", "lr"}, "cumulative block");
      CumulativeConfig c;
      c.epochs = cu.value("epochs", c.epochs);
      c.mb     = cu.value("mb", c.mb);
      c.lr     = cu.value("lr", c.lr);
      Require(c.epochs >= 1 && c.mb >= 1 && c.lr >= 0.0, ErrorCode::kConfig, "invalid cumulative block");
      cfg.cumulative = c;
    }

    Require(j.contains("strategies") && j.at("strategies").is_array() && !j.at("strategies").empty(),
            ErrorCode::kConfig, "experiment config needs a non-empty 'strategies' list");
    std::set<std::string> names;
    for (json const &s : j.at("strategies"))
    {
      cfg.strategies.push_back(ParseStrategy(s));
      Require(names.insert(cfg.strategies.back().name).second, ErrorCode::kConfig,
              "duplicate strategy name '" + cfg.strategies.back().name + "'");
      Require(cfg.strategies.back().name != "cumulative", ErrorCode::kConfig,
              "'cumulative' is reserved for the baseline");
    }

    // Validate every strategy against the network before any compute.
    Network const net(LoadNetworkSpec(cfg.network_path), 0);
    for (StrategyConfig const &s : cfg.strategies)
    {
      ValidateStrategy(s, net);
    }
    if (cfg.generator)
    {
      Require(net.classes() >= cfg.generator->classes, ErrorCode::kConfig,
              "network has fewer outputs than the scenario has classes");
      Require(net.input_shape() == Shape({1, cfg.generator->height, cfg.generator->width}), ErrorCode::kConfig,
              "network input " + ShapeString(net.input_shape()) + " does not match the scenario patterns");
    }
    return cfg;
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kConfig, std::string("experiment config: ") + e.what());
  }
  catch (Error const &e)
  {
    if (e.code() == ErrorCode::kIo)
    {
      throw;
    }
    Fail(ErrorCode::kConfig, e.what());
  }
}

ExperimentConfig LoadExperimentConfig(std::filesystem::path const &path)
{
  std::ifstream is(path);
  Require(is.good(), ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return ParseExperimentConfig(buf.str(), path.parent_path());
}

unsigned WorkerCount()
{
  if (char const *env = std::getenv("LR_THREADS"))
  {
    char *end  = nullptr;
    long value = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && value > 0)
    {
      return static_cast<unsigned>(value);
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ExperimentResult RunExperiment(ExperimentConfig const &cfg, unsigned threads)
{
  NetworkSpec const spec = LoadNetworkSpec(cfg.network_path);

  // Scenarios are generated up front and shared read-only by the workers.
  std::map<std::uint64_t, NicScenario> scenarios;
  auto scenario_key = [&](std::uint64_t seed) { return cfg.scenario_seed.value_or(cfg.manifest_path ? 0 : seed); };
  for (std::uint64_t seed : cfg.seeds)
  {
    std::uint64_t const key = scenario_key(seed);
    if (scenarios.count(key) == 0)
    {
      scenarios.emplace(key, cfg.manifest_path ? LoadScenario(*cfg.manifest_path) : GenerateTinyNic(*cfg.generator, key));
    }
  }

  struct Job
  {
    std::uint64_t seed;
    int           strategy;  // -1 for the cumulative baseline
  };
  std::vector<Job> jobs;
  for (std::uint64_t seed : cfg.seeds)
  {
    for (std::size_t s = 0; s < cfg.strategies.size(); ++s)
    {
      jobs.push_back({seed, static_cast<int>(s)});
    }
    if (cfg.cumulative)
    {
      jobs.push_back({seed, -1});
    }
  }

  std::vector<RunResult>   results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < jobs.size(); k = next++)
    {
      try
      {
        Job const          &job      = jobs[k];
        NicScenario const  &scenario = scenarios.at(scenario_key(job.seed));
        Network             net(spec, InitSeed(job.seed));
        RunResult          &out = results[k];
        out.seed                = job.seed;
        if (job.strategy < 0)
        {
          out.strategy = "cumulative";
          MetricsRow row = CumulativeBaseline(std::move(net), scenario, *cfg.cumulative, TrainSeed(job.seed));
          if (!cfg.protocol.record_wall_time)
          {
            row.train_ms = 0.0;
          }
          out.rows = {row};
        }
        else
        {
          StrategyConfig const &s = cfg.strategies[static_cast<std::size_t>(job.strategy)];
          out.strategy            = s.name;
          out.rows                = RunProtocol(std::move(net), s, scenario, TrainSeed(job.seed), cfg.protocol);
        }
      }
      catch (...)
      {
        errors[k] = std::current_exception();
      }
    }
  };

  unsigned const           count = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < count; ++t)
  {
    pool.emplace_back(worker);
  }
  worker();
  for (std::thread &t : pool)
  {
    t.join();
  }
  for (std::exception_ptr const &e : errors)
  {
    if (e)
    {
      std::rethrow_exception(e);
    }
  }

  ExperimentResult out;
  for (std::size_t k = 0; k < jobs.size(); ++k)
  {
    (jobs[k].strategy < 0 ? out.cumulative : out.runs).push_back(std::move(results[k]));
  }
  return out;
}

std::string SummaryJson(ExperimentConfig const &cfg, ExperimentResult const &result)
{
  json summary;
  summary["seeds"] = cfg.seeds;

  std::optional<double> cumulative_mean;
  if (!result.cumulative.empty())
  {
    json   per_seed = json::array();
    double sum      = 0.0;
    for (RunResult const &r : result.cumulative)
    {
      double const acc = FinalAccuracy(r.rows);
      sum += acc;
      per_seed.push_back({{"seed", r.seed}, {"final_accuracy", Fixed(acc)}});
    }
    cumulative_mean       = sum / static_cast<double>(result.cumulative.size());
    summary["cumulative"] = {{"final_accuracy", Fixed(*cumulative_mean)}, {"per_seed", per_seed}};
  }

  json strategies = json::array();
  for (StrategyConfig const &s : cfg.strategies)
  {
    json   per_seed = json::array();
    double final_sum = 0.0, mean_sum = 0.0;
    std::size_t n = 0;
    for (RunResult const &r : result.runs)
    {
      if (r.strategy != s.name)
      {
        continue;
      }
      double const fin = FinalAccuracy(r.rows);
      double const avg = MeanAccuracy(r.rows);
      final_sum += fin;
      mean_sum += avg;
      ++n;
      per_seed.push_back({{"seed", r.seed}, {"final_accuracy", Fixed(fin)}, {"mean_accuracy", Fixed(avg)}});
    }
    double const fin = n ? final_sum / static_cast<double>(n) : 0.0;
    json entry = {
        {"name", s.name},
        {"strategy", ToString(s.kind)},
        {"replay", s.replay ? ToString(*s.replay) : "none"},
        {"rm_size", s.rm_size},
        {"final_accuracy", Fixed(fin)},
        {"mean_accuracy", Fixed(n ? mean_sum / static_cast<double>(n) : 0.0)},
        {"per_seed", per_seed},
    };
    if (cumulative_mean)
    {
      entry["gap_vs_cumulative"] = Fixed(*cumulative_mean - fin);
    }
    strategies.push_back(entry);
  }
  summary["strategies"] = strategies;
  return summary.dump(2) + "\n";
}

void WriteExperimentOutputs(ExperimentConfig const &cfg, ExperimentResult const &result,
                            std::filesystem::path const &out)
{
  auto write_run = [&](RunResult const &r) {
    WriteFile(out / r.strategy / ("seed_" + std::to_string(r.seed)) / "metrics.csv", FormatMetricsCsv(r.rows));
  };
  for (RunResult const &r : result.runs)
  {
    write_run(r);
  }
  for (RunResult const &r : result.cumulative)
  {
    write_run(r);
  }
  WriteFile(out / "summary.json", SummaryJson(cfg, result));
}

}  // namespace lr

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

#include "latent_replay/error.hpp"
#include "latent_replay/scenario.hpp"

#include "../support.hpp"
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace lr;

namespace {

TinyNicParams SmallParams()
{
  TinyNicParams p;
  p.classes               = 4;
  p.instances_per_class   = 2;
  p.frames_per_session    = 12;
  p.first_batch_classes   = 2;
  p.first_batch_instances = 1;
  p.test_frames           = 3;
  p.height                = 8;
  p.width                 = 8;
  return p;
}

NetworkSpec SmallNet()
{
  return ParseNetworkSpec(R"({
    "input": [1, 8, 8], "classes": 4, "tap": "relu1", "head": "fc",
    "layers": [
      {"name": "conv1", "kind": "conv", "out": 4, "kernel": 3, "stride": 2, "pad": 1, "bias": false},
      {"name": "brn1", "kind": "brn", "avg_rate": 0.9},
      {"name": "relu1", "kind": "relu"},
      {"name": "pool", "kind": "avgpool"},
      {"name": "fc", "kind": "dense", "out": 4}
    ]})");
}

StrategyConfig Naive()
{
  StrategyConfig cfg;
  cfg.mb           = 8;
  cfg.epochs_first = 2;
  cfg.epochs       = 1;
  cfg.lr_first     = 0.05;
  cfg.lr_head      = 0.05;
  cfg.lr_other     = 0.05;
  return cfg;
}

std::filesystem::path TempDir(std::string const &name)
{
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("default tinynic layout")
{
  auto const s = GenerateTinyNic(TinyNicParams{}, 2024);
  CHECK(s.classes == 10);
  CHECK(s.pattern_shape == Shape{1, 16, 16});
  // 4 classes x 3 instances in the first batch, one session per later batch.
  CHECK(s.batches.size() == 1 + (50 - 12));
  CHECK(s.batches[0].size() == 4 * 3 * 50);
  CHECK(s.test.size() == 10 * 5 * 10);
  std::set<int> first(s.batches[0].y.begin(), s.batches[0].y.end());
  CHECK(first.size() == 4);
  for (std::size_t b = 1; b < s.batches.size(); ++b)
  {
    CHECK(s.batches[b].size() == 50);
    CHECK(std::set<int>(s.batches[b].y.begin(), s.batches[b].y.end()).size() == 1);
  }
  std::set<int> all;
  for (auto const &b : s.batches)
  {
    all.insert(b.y.begin(), b.y.end());
  }
  CHECK(all.size() == 10);
}

TEST_CASE("tinynic is deterministic per seed")
{
  auto const a = GenerateTinyNic(SmallParams(), 5);
  auto const b = GenerateTinyNic(SmallParams(), 5);
  auto const c = GenerateTinyNic(SmallParams(), 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK_FALSE(a.batches[1].x == c.batches[1].x);
}

TEST_CASE("sessions are smooth and classes are distinct")
{
  auto const s = GenerateTinyNic(TinyNicParams{}, 2024);
  for (std::size_t b = 1; b < s.batches.size(); ++b)
  {
    CHECK(ConsecutiveFrameCorrelation(s.batches[b].x) > 0.95);
  }

  SeededRng   rng(3);
  double      sum = 0.0;
  std::size_t n   = 0;
  while (n < 500)
  {
    auto const i = rng.Below(s.test.size());
    auto const j = rng.Below(s.test.size());
    if (s.test.y[i] == s.test.y[j])
    {
      continue;
    }
    sum += PearsonCorrelation(s.test.x.row(i), s.test.x.row(j));
    ++n;
  }
  CHECK(sum / static_cast<double>(n) < 0.5);
}

TEST_CASE("pearson correlation")
{
  std::vector<float> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1};
  CHECK(PearsonCorrelation(a, b) == doctest::Approx(1.0));
  CHECK(PearsonCorrelation(a, c) == doctest::Approx(-1.0));
  Tensor frames({2, 4}, std::vector<float>{1, 2, 3, 4, 4, 3, 2, 1});
  CHECK(ConsecutiveFrameCorrelation(frames) == doctest::Approx(-1.0));
}

TEST_CASE("batch count truncation")
{
  auto p                = SmallParams();
  p.num_batches         = 3;
  auto const s          = GenerateTinyNic(p, 1);
  CHECK(s.batches.size() == 3);

  TinyNicParams big;
  big.instances_per_class = 6;
  big.num_batches         = 40;
  big.frames_per_session  = 5;
  big.test_frames         = 1;
  CHECK(GenerateTinyNic(big, 1).batches.size() == 40);
}

TEST_CASE("tinynic parameter validation")
{
  auto bad                  = SmallParams();
  bad.first_batch_classes   = 5;
  CHECK_THROWS_AS(ValidateTinyNic(bad), Error);
  bad                       = SmallParams();
  bad.first_batch_instances = 3;
  CHECK_THROWS_AS(ValidateTinyNic(bad), Error);
  bad         = SmallParams();
  bad.classes = 1;
  CHECK_THROWS_AS(ValidateTinyNic(bad), Error);

  auto const round = ParseTinyNicParams(TinyNicParamsToJson(SmallParams()));
  CHECK(GenerateTinyNic(round, 2) == GenerateTinyNic(SmallParams(), 2));
  CHECK_THROWS_AS(ParseTinyNicParams(R"({"classes": 4, "colour": 1})"), Error);
}

TEST_CASE("scenario and dataset round trips")
{
  auto const s   = GenerateTinyNic(SmallParams(), 9);
  auto const dir = TempDir("lr_scenario_rt");
  SaveScenario(s, dir);
  CHECK(LoadScenario(dir / "manifest.json") == s);

  auto const ds = dir / "ds" / "manifest.json";
  SaveDataset(s.batches[0], ds);
  auto const back = LoadDataset(ds);
  CHECK(back.y == s.batches[0].y);
  CHECK(back.x == s.batches[0].x);

  // A corrupted tensor file is a format error.
  for (auto const &entry : std::filesystem::directory_iterator(dir / "ds"))
  {
    if (entry.path().extension() == ".lrt")
    {
      std::fstream f(entry.path(), std::ios::in | std::ios::out | std::ios::binary);
      f.put('Z');
    }
  }
  try
  {
    LoadDataset(ds);
    FAIL("expected a format error");
  }
  catch (Error const &e)
  {
    CHECK(e.code() == ErrorCode::kFormat);
  }
  CHECK_THROWS_AS(LoadDataset(dir / "missing.json"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("protocol emits one row per batch and never rewrites history")
{
  auto const      s    = GenerateTinyNic(SmallParams(), 4);
  Network const   net(SmallNet(), 7);
  ProtocolOptions opts;
  auto rows = RunProtocol(net, Naive(), s, 11, opts);
  REQUIRE(rows.size() == s.batches.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
  {
    CHECK(rows[i].batch == static_cast<int>(i) + 1);
    REQUIRE(rows[i].accuracy.has_value());
    CHECK(*rows[i].accuracy >= 0.0);
    CHECK(*rows[i].accuracy <= 1.0);
    CHECK(rows[i].train_ms == 0.0);
  }
  CHECK(RunProtocol(net, Naive(), s, 11, opts).back().accuracy == rows.back().accuracy);

  // The first row only depends on the first batch.
  NicScenario one = s;
  one.batches.resize(1);
  auto r1  = RunProtocol(net, Naive(), one, 11, opts);
  REQUIRE(r1.size() == 1);
  CHECK(r1[0].accuracy == rows[0].accuracy);

  // A one-batch stream is plain supervised training.
  Learner direct(Naive(), net, 11);
  direct.TrainBatch(one.batches[0].x, one.batches[0].y);
  CHECK(*r1[0].accuracy == direct.Accuracy(one.test.x, one.test.y));

  opts.eval_every = 2;
  auto sparse     = RunProtocol(net, Naive(), s, 11, opts);
  CHECK_FALSE(sparse[0].accuracy.has_value());
  CHECK(sparse[1].accuracy.has_value());
  CHECK(sparse.back().accuracy.has_value());
}

TEST_CASE("cumulative baseline on a one-batch stream")
{
  NicScenario s = GenerateTinyNic(SmallParams(), 4);
  s.batches.resize(1);
  CumulativeConfig cfg{2, 8, 0.05};
  auto const       a = CumulativeBaseline(Network(SmallNet(), 7), s, cfg, 3);
  auto const       b = CumulativeBaseline(Network(SmallNet(), 7), s, cfg, 3);
  REQUIRE(a.accuracy.has_value());
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.batch == 1);
  auto const u = Union(s.batches);
  CHECK(u.x == s.batches[0].x);
}

TEST_CASE("metrics csv")
{
  std::vector<MetricsRow> rows{{1, 0.5, 1.25, 10, std::nullopt}, {2, std::nullopt, 0.0, 20, 0.125}};
  CHECK(FormatMetricsCsv(rows) ==
        "batch,accuracy,train_ms,rm_items,drift\n1,0.500000,1.250,10,\n2,,0.000,20,0.125000\n");
}

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

// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "latent_replay/accounting.hpp"
#include "latent_replay/error.hpp"
#include "latent_replay/experiment.hpp"
#include "latent_replay/kernels.hpp"
#include "latent_replay/replay.hpp"
#include "latent_replay/scenario.hpp"
#include "latent_replay/strategies.hpp"
#include "latent_replay/trainer.hpp"

#include "../support.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace lr;
using lrtest::RandomTensor;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
  bool        ok{false};
  std::string detail;
};

class Stopwatch
{
public:
  double seconds() const
  {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_{std::chrono::steady_clock::now()};
};

std::string Fmt(char const *format, double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string Slurp(fs::path const &p)
{
  std::ifstream     is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int Shell(std::string const &cmd, std::string *out = nullptr)
{
  FILE *pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr)
  {
    return -1;
  }
  std::array<char, 4096> buf{};
  std::string            text;
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr)
  {
    text += buf.data();
  }
  int const status = pclose(pipe);
  if (out != nullptr)
  {
    *out = text;
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Quote(std::string const &s)
{
  return "'" + s + "'";
}

// ------------------------------------------------------------------ 1

Outcome TradeoffReproduction()
{
  Stopwatch   clock;
  std::string out;
  int const   rc = Shell(Quote(LR_CLI_PATH) + " tradeoff " + Quote(lrtest::DataPath("mobilenet_v1_cost.csv")) +
                       " --rm-size 1500 --layers Images,conv5_1/dw,conv5_2/dw,conv5_3/dw,conv5_4/dw,conv5_5/dw,"
                       "conv5_6/dw,conv6/dw,pool6",
                       &out);
  double const elapsed = clock.seconds();
  if (rc != 0)
  {
    return {false, "tradeoff exited with " + std::to_string(rc)};
  }

  struct Expect
  {
    double        pct;
    std::uint64_t pattern;
  };
  std::vector<Expect> const expect{{100.00, 49152}, {59.261, 32768}, {50.101, 32768},
                                   {40.941, 32768}, {31.781, 32768}, {22.621, 32768},
                                   {13.592, 8192},  {9.012, 16384},  {0.027, 1024}};
  std::istringstream        lines(out);
  std::string               line;
  std::getline(lines, line);  // header
  double      worst = 0.0;
  std::size_t row   = 0;
  bool        sizes = true;
  while (std::getline(lines, line) && row < expect.size())
  {
    std::stringstream        ss(line);
    std::vector<std::string> cells;
    std::string              cell;
    while (std::getline(ss, cell, ','))
    {
      cells.push_back(cell);
    }
    if (cells.size() != 5)
    {
      return {false, "malformed row: " + line};
    }
    worst = std::max(worst, std::fabs(std::stod(cells[1]) - expect[row].pct));
    sizes = sizes && std::stoull(cells[2]) == expect[row].pattern;
    ++row;
  }
  bool const ok = row == expect.size() && worst < 0.01 && sizes && elapsed < 1.0;
  return {ok, "9 rows, worst |d pct| " + Fmt("%.4f", worst) + ", pattern sizes " + (sizes ? "exact" : "WRONG") +
                  ", " + Fmt("%.3f s", elapsed)};
}

// ------------------------------------------------------------------ 2

Outcome Footprint()
{
  auto const          table = LoadCostTable(lrtest::DataPath("mobilenet_v1_cost.csv"));
  std::uint64_t const bytes = MemoryFootprint(1500, PatternSize(table, "conv5_4/dw"), 1);
  std::string const   text  = FormatMegabytes(bytes);
  bool const          ok    = bytes == 1500ULL * 32768ULL && bytes == 49152000ULL && text == "48 MB";
  return {ok, std::to_string(bytes) + " bytes rendered \"" + text + "\" (KB = 1024 B, MB = 1000 KB)"};
}

// ------------------------------------------------------------------ 3

Outcome Proportions()
{
  auto const a  = ComposeMiniBatch(300, 1500, 128);
  auto const b  = ComposeMiniBatch(100, 500, 120);
  bool const ok = a.n_native == 21 && a.n_replay == 107 && b.n_native == 20 && b.n_replay == 100;
  return {ok, "(128,300,1500)->(" + std::to_string(a.n_native) + "," + std::to_string(a.n_replay) +
                  "), (120,100,500)->(" + std::to_string(b.n_native) + "," + std::to_string(b.n_replay) + ")"};
}

// ------------------------------------------------------------------ 4

Outcome LatentEqualsNative()
{
  Stopwatch clock;
  Network   proto(lrtest::ToySpec(), 31);
  proto.set_all_moments_frozen(true);
  proto.set_frozen_below_tap(true);
  // Give the frozen BRN non-trivial moments.
  auto &brn = static_cast<BrnLayer &>(proto.layer(1));
  SeededRng rng(32);
  std::vector<float> mu(8), sigma(8);
  for (std::size_t c = 0; c < 8; ++c)
  {
    mu[c]    = static_cast<float>(rng.Normal(0.0, 0.3));
    sigma[c] = static_cast<float>(1.0 + rng.Uniform());
  }
  brn.SetMovingMoments(mu, sigma);

  Tensor const replay_x = RandomTensor({40, 6}, rng);
  std::vector<int> replay_y(40);
  for (std::size_t i = 0; i < 40; ++i)
  {
    replay_y[i] = static_cast<int>(i % 4);
  }
  Tensor const latents = proto.InferTap(replay_x);

  Network latent = proto;
  Network native = proto;
  for (int step = 0; step < 50; ++step)
  {
    Tensor const     xn = RandomTensor({6, 6}, rng);
    auto const       idx = rng.SampleWithoutReplacement(40, 10);
    std::vector<int> y;
    for (std::size_t i = 0; i < 6; ++i)
    {
      y.push_back(static_cast<int>((step + i) % 4));
    }
    for (auto i : idx)
    {
      y.push_back(replay_y[i]);
    }

    auto fl = latent.ForwardConcat(xn, latents.gather_rows(idx), Mode::kTrain);
    auto gl = latent.Backward(SoftmaxCrossEntropy(fl.logits, y).dlogits, 6);
    latent.SgdStep(gl, 0.05);

    auto fn = native.Forward(ConcatRows(xn, replay_x.gather_rows(idx)), Mode::kTrain);
    auto gn = native.Backward(SoftmaxCrossEntropy(fn.logits, y).dlogits, 16);
    native.SgdStep(gn, 0.05);
  }

  double worst = 0.0;
  for (std::size_t l = proto.tap_index() + 1; l < proto.num_layers(); ++l)
  {
    auto pa = latent.layer(l).Params();
    auto pb = native.layer(l).Params();
    for (std::size_t p = 0; p < pa.size(); ++p)
    {
      worst = std::max(worst, MaxAbsDiff(*pa[p], *pb[p]));
    }
  }
  bool moved = !(latent.head().weight == proto.head().weight);
  double const elapsed = clock.seconds();
  return {worst < 1e-5 && moved && elapsed < 10.0,
          "50 steps, max |d theta| above tap " + Fmt("%.2e", worst) + ", " + Fmt("%.2f s", elapsed)};
}

// ------------------------------------------------------------------ 5

LayerSpec Spec(std::string name, LayerKind kind, std::size_t out = 0, std::size_t kernel = 1, std::size_t stride = 1,
               std::size_t pad = 0)
{
  LayerSpec s;
  s.name   = std::move(name);
  s.kind   = kind;
  s.out    = out;
  s.kernel = kernel;
  s.stride = stride;
  s.pad    = pad;
  return s;
}

/// Worst relative error over input and parameter coordinates of one layer.
double LayerGradError(Layer &proto, Tensor x, std::size_t coords, std::size_t &checked,
                      std::function<bool(std::size_t)> usable = {})
{
  SeededRng  rng(7);
  LayerCache cache;
  auto       live = proto.Clone();
  Tensor     y    = live->Train(x, cache);
  Tensor     w    = RandomTensor(y.shape(), rng);
  std::vector<Tensor> grads;
  Tensor dx = live->Backward(w, cache, grads, true);
  auto   f  = [&] {
    auto       fresh = proto.Clone();
    LayerCache c;
    return lrtest::Probe(fresh->Train(x, c), w);
  };
  auto r = lrtest::CheckCoordinates(x, dx, f, rng, coords, 1e-2, usable);
  checked = r.checked;
  double worst = r.worst;
  auto   params = proto.Params();
  for (std::size_t p = 0; p < params.size(); ++p)
  {
    if (params[p]->size() == 0)
    {
      continue;
    }
    auto rp = lrtest::CheckCoordinates(*params[p], grads[p], f, rng, coords, 1e-2);
    checked = std::min(checked, rp.checked);
    worst   = std::max(worst, rp.worst);
  }
  return worst;
}

Outcome GradientSuite()
{
  Stopwatch                     clock;
  std::size_t const             coords = 12;
  SeededRng                     rng(5);
  std::vector<std::string>      report;
  double                        worst_all = 0.0;
  std::size_t                   min_checked = std::numeric_limits<std::size_t>::max();
  auto note = [&](std::string const &name, double worst, std::size_t checked) {
    worst_all   = std::max(worst_all, worst);
    min_checked = std::min(min_checked, checked);
    report.push_back(name + " " + Fmt("%.1e", worst) + "/" + std::to_string(checked));
  };
  std::size_t checked = 0;

  DenseLayer dense(Spec("fc", LayerKind::kDense, 5), 7);
  dense.Initialize(rng);
  {
    double const e = LayerGradError(dense, RandomTensor({4, 7}, rng), coords, checked);
    note("dense", e, checked);
  }

  ConvLayer conv(Spec("conv", LayerKind::kConv, 4, 3, 2, 1), 3);
  conv.Initialize(rng);
  conv.bias = RandomTensor({4}, rng, 0.1);
  {
    double const e = LayerGradError(conv, RandomTensor({2, 3, 7, 7}, rng), coords, checked);
    note("conv", e, checked);
  }

  LayerSpec dws = Spec("dw", LayerKind::kDwConv, 0, 3, 1, 1);
  ConvLayer dw(dws, 4);
  dw.Initialize(rng);
  {
    double const e = LayerGradError(dw, RandomTensor({2, 4, 5, 5}, rng), coords, checked);
    note("dwconv", e, checked);
  }

  ReluLayer relu(Spec("relu", LayerKind::kRelu));
  Tensor    rx = RandomTensor({4, 10}, rng);
  {
    double const e = LayerGradError(relu, rx, coords, checked, [&](std::size_t k) { return std::fabs(rx[k]) > 0.05f; });
    note("relu", e, checked);
  }

  BrnLayer brn(Spec("brn", LayerKind::kBrn), 3);
  brn.gamma = RandomTensor({3}, rng, 0.3);
  for (std::size_t c = 0; c < 3; ++c)
  {
    brn.gamma[c] += 1.0f;
  }
  brn.beta = RandomTensor({3}, rng, 0.1);
  {
    double const e = LayerGradError(brn, RandomTensor({4, 3, 3, 3}, rng, 2.0), coords, checked);
    note("brn", e, checked);
  }

  BrnLayer clipped(Spec("brn", LayerKind::kBrn), 2);
  clipped.SetMovingMoments({4.0f, -4.0f}, {0.2f, 0.2f});
  {
    double const e = LayerGradError(clipped, RandomTensor({6, 2}, rng), coords, checked);
    note("brn-clipped", e, checked);
  }

  BrnLayer moving(Spec("brn", LayerKind::kBrn), 3);
  moving.SetMovingMoments({0.5f, -0.2f, 0.0f}, {1.5f, 0.7f, 2.0f});
  moving.moments_frozen = true;
  {
    double const e = LayerGradError(moving, RandomTensor({5, 3, 2, 2}, rng), coords, checked);
    note("brn-moving", e, checked);
  }

  // SI penalty with respect to the parameters.
  Tensor                      ref = RandomTensor({20}, rng);
  std::vector<Tensor const *> ref_params{&ref};
  SiConfig                    cfg;
  cfg.lambda = 3.0;
  SiState state(cfg, ref_params);
  for (std::size_t k = 0; k < 20; ++k)
  {
    state.importance[0][k] = static_cast<float>(0.001 * rng.Uniform());
  }
  Tensor                      theta = RandomTensor({20}, rng);
  std::vector<Tensor const *> now{&theta};
  auto const                  pen = SiPenalty(now, state);
  auto r = lrtest::CheckCoordinates(theta, pen.dtheta[0], [&] { return SiPenalty(now, state).loss; }, rng, coords,
                                    1e-2);
  note("si", r.worst, r.checked);

  // L1 sparsifier away from the kink at zero.
  Tensor acts = RandomTensor({3, 12}, rng);
  auto   l1   = L1ActivationPenalty(acts, 0.7);
  auto   rl   = lrtest::CheckCoordinates(acts, l1.dacts, [&] { return L1ActivationPenalty(acts, 0.7).penalty; }, rng,
                                         coords, 1e-3, [&](std::size_t k) { return std::fabs(acts[k]) > 0.01f; });
  note("l1", rl.worst, rl.checked);

  double const elapsed = clock.seconds();
  std::string  detail  = ">=" + std::to_string(min_checked) + " coords each, worst rel err:";
  for (auto const &s : report)
  {
    detail += " " + s;
  }
  detail += ", " + Fmt("%.2f s", elapsed);
  return {worst_all < 1e-3 && min_checked >= 10 && elapsed < 30.0, detail};
}

// ------------------------------------------------------------------ 6

Outcome ReplayUpdateProperties()
{
  std::size_t const   capacity = 1000, batches = 20, sims = 100;
  std::vector<double> occupancy(batches + 1, 0.0);
  bool                bounded = true, replace_rule = true, h_rule = true;
  for (std::size_t sim = 0; sim < sims; ++sim)
  {
    ReplayMemory rm(ReplayKind::kNative, capacity, 1000 + sim);
    SeededRng    rng(sim);
    for (std::size_t i = 1; i <= batches; ++i)
    {
      std::size_t const n = i == 1 ? 1200 : 1000 + rng.Below(200);
      Tensor            x({n, 1});
      std::vector<int>  y(n, static_cast<int>(i));
      auto const        rep = rm.Update(x, y, static_cast<int>(i));
      bounded             = bounded && rm.size() <= capacity;
      replace_rule        = replace_rule && ((rep.replaced == 0) == (i == 1));
      std::size_t const h = capacity / i;
      h_rule              = h_rule && (h > n || rep.h == h);
    }
    auto const occ = rm.OccupancyByBatch(static_cast<int>(batches));
    for (std::size_t i = 1; i <= batches; ++i)
    {
      occupancy[i] += static_cast<double>(occ[i]) / sims;
    }
  }
  double const target = static_cast<double>(capacity) / batches;
  double       worst  = 0.0;
  for (std::size_t i = 1; i <= batches; ++i)
  {
    worst = std::max(worst, std::fabs(occupancy[i] - target) / target);
  }
  bool const ok = bounded && replace_rule && h_rule && worst <= 0.20;
  return {ok, std::string("100 sims x 20 batches: |RM|<=cap ") + (bounded ? "yes" : "NO") + ", replace-empty iff i=1 " +
                  (replace_rule ? "yes" : "NO") + ", h=floor(cap/i) " + (h_rule ? "yes" : "NO") +
                  ", worst occupancy deviation " + Fmt("%.1f%%", 100.0 * worst)};
}

// ------------------------------------------------------------------ 7

using Matrix = std::vector<std::vector<double>>;

Matrix Invert(Matrix a)
{
  std::size_t const n = a.size();
  Matrix            inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
  {
    inv[i][i] = 1.0;
  }
  for (std::size_t col = 0; col < n; ++col)
  {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
    {
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col]))
      {
        piv = r;
      }
    }
    std::swap(a[col], a[piv]);
    std::swap(inv[col], inv[piv]);
    double const d = a[col][col];
    for (std::size_t k = 0; k < n; ++k)
    {
      a[col][k] /= d;
      inv[col][k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r)
    {
      if (r == col)
      {
        continue;
      }
      double const f = a[r][col];
      for (std::size_t k = 0; k < n; ++k)
      {
        a[r][k] -= f * a[col][k];
        inv[r][k] -= f * inv[col][k];
      }
    }
  }
  return inv;
}

Outcome DsldaOracle()
{
  std::size_t const dim = 8, n = 400;
  SeededRng         rng(77);
  auto draw = [&](std::size_t count, Tensor &x, std::vector<int> &y) {
    x = Tensor({count, dim});
    y.assign(count, 0);
    for (std::size_t i = 0; i < count; ++i)
    {
      y[i] = static_cast<int>(rng.Below(2));
      for (std::size_t k = 0; k < dim; ++k)
      {
        double const centre = y[i] == 0 ? 0.0 : (k < 3 ? 1.0 : 0.2);
        x[i * dim + k]      = static_cast<float>(centre + rng.Normal(0.0, 1.0 + 0.1 * k));
      }
    }
  };
  Tensor           x, xt;
  std::vector<int> y, yt;
  draw(n, x, y);
  draw(1000, xt, yt);

  Dslda model(dim, 2, 1e-4);
  for (std::size_t i = 0; i < n; ++i)
  {
    model.Update(x.row(i), y[i]);
  }

  Matrix              mu(2, std::vector<double>(dim, 0.0));
  std::vector<double> count(2, 0.0);
  for (std::size_t i = 0; i < n; ++i)
  {
    count[y[i]] += 1.0;
    for (std::size_t k = 0; k < dim; ++k)
    {
      mu[y[i]][k] += x[i * dim + k];
    }
  }
  for (std::size_t c = 0; c < 2; ++c)
  {
    for (auto &v : mu[c])
    {
      v /= count[c];
    }
  }
  Matrix cov(dim, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < n; ++i)
  {
    for (std::size_t r = 0; r < dim; ++r)
    {
      for (std::size_t s = 0; s < dim; ++s)
      {
        cov[r][s] += (x[i * dim + r] - mu[y[i]][r]) * (x[i * dim + s] - mu[y[i]][s]) / static_cast<double>(n);
      }
    }
  }
  for (std::size_t r = 0; r < dim; ++r)
  {
    for (std::size_t s = 0; s < dim; ++s)
    {
      cov[r][s] = (1.0 - 1e-4) * cov[r][s] + (r == s ? 1e-4 : 0.0);
    }
  }
  Matrix const lambda = Invert(cov);

  double mean_err = 0.0;
  for (std::size_t c = 0; c < 2; ++c)
  {
    for (std::size_t k = 0; k < dim; ++k)
    {
      mean_err = std::max(mean_err, std::fabs(model.mean(static_cast<int>(c))(k) - mu[c][k]));
    }
  }

  auto const  pred  = model.Predict(xt);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < 1000; ++i)
  {
    std::array<double, 2> score{};
    for (std::size_t c = 0; c < 2; ++c)
    {
      for (std::size_t r = 0; r < dim; ++r)
      {
        double lm = 0.0;
        for (std::size_t s = 0; s < dim; ++s)
        {
          lm += lambda[r][s] * mu[c][s];
        }
        score[c] += lm * xt[i * dim + r] - 0.5 * lm * mu[c][r];
      }
    }
    int const oracle = score[1] > score[0] ? 1 : 0;
    agree += pred[i] == oracle ? 1 : 0;
  }
  double const rate = static_cast<double>(agree) / 1000.0;
  return {mean_err < 1e-4 && rate >= 0.99,
          "400 samples, max |d mean| " + Fmt("%.2e", mean_err) + ", held-out agreement " + Fmt("%.1f%%", 100.0 * rate)};
}

// ------------------------------------------------------------------ 8

Outcome CwrIsolation()
{
  NetworkSpec const spec = ParseNetworkSpec(R"({
    "input": [6], "classes": 8, "tap": "relu1", "head": "fc2",
    "layers": [
      {"name": "fc1", "kind": "dense", "out": 12},
      {"name": "brn1", "kind": "brn", "avg_rate": 0.9},
      {"name": "relu1", "kind": "relu"},
      {"name": "fc2", "kind": "dense", "out": 8}
    ]})");
  std::size_t checks = 0, violations = 0;
  double      f_min = 0.0, f_max = 0.0;
  for (std::uint64_t trial = 0; trial < 20; ++trial)
  {
    SeededRng rng(900 + trial);
    std::vector<std::vector<float>> centres(8, std::vector<float>(6));
    for (auto &c : centres)
    {
      for (auto &v : c)
      {
        v = static_cast<float>(rng.Normal(0.0, 2.0));
      }
    }
    StrategyConfig cfg;
    cfg.kind         = trial % 2 == 0 ? StrategyKind::kAr1Star : StrategyKind::kCwrStar;
    cfg.replay       = trial % 4 < 2 ? std::optional<ReplayKind>(ReplayKind::kLatent) : std::nullopt;
    cfg.rm_size      = cfg.replay ? 12 : 0;
    cfg.mb           = 8;
    cfg.epochs_first = 2;
    cfg.epochs       = 2;
    cfg.lr_first     = 0.05;
    cfg.lr_head      = 0.1;
    cfg.lr_other     = 0.01;
    Learner learner(cfg, Network(spec, trial), trial);

    for (int b = 0; b < 6; ++b)
    {
      std::size_t const k = 1 + rng.Below(3);
      auto              classes = rng.SampleWithoutReplacement(8, k);
      std::size_t const n       = 6 + rng.Below(10);
      Tensor            x({n, 6});
      std::vector<int>  y(n);
      for (std::size_t i = 0; i < n; ++i)
      {
        y[i] = static_cast<int>(classes[i % k]);
        for (std::size_t d = 0; d < 6; ++d)
        {
          x[i * 6 + d] = centres[y[i]][d] + static_cast<float>(rng.Normal(0.0, 0.5));
        }
      }
      std::set<int> touched(y.begin(), y.end());
      for (int l : learner.memory().AllLabels())
      {
        touched.insert(l);
      }
      Tensor const before_w = learner.cwr()->cw_weight;
      Tensor const before_b = learner.cwr()->cw_bias;
      learner.TrainBatch(x, y);
      Tensor const &after_w = learner.cwr()->cw_weight;
      for (int c = 0; c < 8; ++c)
      {
        if (touched.count(c) > 0)
        {
          continue;
        }
        ++checks;
        bool same = before_b[c] == learner.cwr()->cw_bias[c];
        for (std::size_t d = 0; d < 12; ++d)
        {
          float const was = before_w[c * 12 + d];
          float const now = after_w[c * 12 + d];
          same            = same && std::memcmp(&was, &now, sizeof(float)) == 0;
        }
        violations += same ? 0 : 1;
      }
      if (learner.si() != nullptr)
      {
        for (Tensor const &f : learner.si()->importance)
        {
          for (std::size_t i = 0; i < f.size(); ++i)
          {
            f_min = std::min(f_min, static_cast<double>(f[i]));
            f_max = std::max(f_max, static_cast<double>(f[i]));
          }
        }
      }
    }
  }
  bool const ok = violations == 0 && checks > 0 && f_min >= 0.0 && f_max <= static_cast<double>(0.001f);
  return {ok, std::to_string(checks) + " absent-class row checks, " + std::to_string(violations) +
                  " changed; F in [" + Fmt("%.2g", f_min) + ", " + Fmt("%.2g", f_max) + "]"};
}

// ------------------------------------------------------------------ 9

Outcome DeskScale()
{
  Stopwatch  clock;
  auto const cfg    = LoadExperimentConfig(lrtest::DataPath("configs/reference_sweep.json"));
  auto const result = RunExperiment(cfg, WorkerCount());

  std::map<std::string, double> final_acc;
  for (auto const &run : result.runs)
  {
    final_acc[run.strategy] += *run.rows.back().accuracy / static_cast<double>(cfg.seeds.size());
  }
  double cumulative = 0.0;
  for (auto const &run : result.cumulative)
  {
    cumulative += *run.rows.back().accuracy / static_cast<double>(cfg.seeds.size());
  }
  double const elapsed = clock.seconds();

  double const naive = final_acc.at("naive");
  double const rm0   = final_acc.at("ar1starfree_rm0");
  double const rm100 = final_acc.at("ar1starfree_rm100");
  double const rm250 = final_acc.at("ar1starfree_rm250");
  double const rm500 = final_acc.at("ar1starfree_rm500");
  double const lower = final_acc.at("ar1starfree_rm500_relu1");

  bool const a = rm500 - naive >= 0.10;
  bool const b = rm100 >= rm0 - 0.02 && rm250 >= rm100 - 0.02 && rm500 >= rm250 - 0.02;
  bool const c = lower >= rm500 - 0.02;
  bool       d = true;
  for (auto const &[name, acc] : final_acc)
  {
    d = d && cumulative >= acc;
  }
  bool const fast = elapsed < 600.0;

  std::string detail = "3 seeds: naive " + Fmt("%.3f", naive) + ", rm{0,100,250,500} " + Fmt("%.3f", rm0) + "/" +
                       Fmt("%.3f", rm100) + "/" + Fmt("%.3f", rm250) + "/" + Fmt("%.3f", rm500) + ", lower tap " +
                       Fmt("%.3f", lower) + ", cumulative " + Fmt("%.3f", cumulative) + "; (a)" + (a ? "ok" : "FAIL") +
                       " (b)" + (b ? "ok" : "FAIL") + " (c)" + (c ? "ok" : "FAIL") + " (d)" + (d ? "ok" : "FAIL") +
                       ", " + Fmt("%.0f s", elapsed);
  return {a && b && c && d && fast, detail};
}

// ------------------------------------------------------------------ 10

Outcome Sparsity()
{
  auto const  scenario = GenerateTinyNic(TinyNicParams{}, 2024);
  NetworkSpec spec     = LoadNetworkSpec(lrtest::DataPath("nets/tinynic.json"));
  std::vector<double> fractions;
  for (double alpha : {0.0, 1e-3, 2e-3, 4e-3})
  {
    StrategyConfig cfg;
    cfg.kind             = StrategyKind::kAr1StarFree;
    cfg.replay           = ReplayKind::kLatent;
    cfg.tap              = "relu2";
    cfg.rm_size          = 500;
    cfg.mb               = 50;
    cfg.epochs_first     = 30;
    cfg.lr_first         = 0.05;
    cfg.sparsifier.alpha = alpha;
    Learner learner(cfg, Network(spec, InitSeed(1)), TrainSeed(1));
    learner.TrainBatch(scenario.batches[0].x, scenario.batches[0].y);
    fractions.push_back(FractionNonZero(learner.network().InferTap(scenario.batches[0].x)));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < fractions.size(); ++i)
  {
    monotone = monotone && fractions[i] <= fractions[i - 1];
  }
  bool const  band   = fractions[0] >= 0.4 && fractions[0] <= 0.6;
  std::string detail = "non-zero fraction at relu2 for alpha {0,1e-3,2e-3,4e-3}:";
  for (double f : fractions)
  {
    detail += " " + Fmt("%.3f", f);
  }
  return {monotone && band, detail};
}

// ------------------------------------------------------------------ 11

Outcome Determinism()
{
  fs::path const work = fs::temp_directory_path() / "lr_acceptance_determinism";
  fs::remove_all(work);
  std::string const config = lrtest::DataPath("configs/default.json");
  for (char const *dir : {"a", "b"})
  {
    int const rc = Shell(Quote(LR_CLI_PATH) + " run --config " + Quote(config) + " --seed 1 --out " +
                         Quote((work / dir).string()) + " 2>&1");
    if (rc != 0)
    {
      return {false, "run exited with " + std::to_string(rc)};
    }
  }
  std::size_t files = 0;
  bool        same  = true;
  for (auto const &entry : fs::recursive_directory_iterator(work / "a"))
  {
    if (entry.path().filename() != "metrics.csv")
    {
      continue;
    }
    ++files;
    fs::path const twin = work / "b" / fs::relative(entry.path(), work / "a");
    same                = same && fs::exists(twin) && Slurp(entry.path()) == Slurp(twin);
  }
  fs::remove_all(work);
  return {same && files >= 5, std::to_string(files) + " metrics.csv files from two runs of the default config, " +
                                  (same ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

// Optional arguments select criteria by number; none runs all of them.
int main(int argc, char **argv)
{
  struct Criterion
  {
    char const            *title;
    std::function<Outcome()> run;
  };
  std::vector<Criterion> const criteria{
      {"trade-off table reproduction", TradeoffReproduction},
      {"replay footprint arithmetic", Footprint},
      {"replay proportion arithmetic", Proportions},
      {"latent and native replay agree", LatentEqualsNative},
      {"gradient suite", GradientSuite},
      {"replay memory update properties", ReplayUpdateProperties},
      {"streaming LDA matches batch LDA", DsldaOracle},
      {"consolidated head isolation", CwrIsolation},
      {"desk-scale behaviour on TinyNIC", DeskScale},
      {"sparsification trend", Sparsity},
      {"run determinism", Determinism},
  };

  std::set<std::size_t> only;
  for (int a = 1; a < argc; ++a)
  {
    only.insert(static_cast<std::size_t>(std::stoul(argv[a])));
  }

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i)
  {
    if (!only.empty() && only.count(i + 1) == 0)
    {
      continue;
    }
    Outcome out;
    try
    {
      out = criteria[i].run();
    }
    catch (std::exception const &e)
    {
      out = {false, std::string("exception: ") + e.what()};
    }
    failures += out.ok ? 0 : 1;
    std::printf("%s %2zu %s: %s\n", out.ok ? "PASS" : "FAIL", i + 1, criteria[i].title, out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

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
#include "latent_replay/kernels.hpp"
#include "latent_replay/layers.hpp"

#include "../support.hpp"
#include "doctest.h"

#include <cmath>

using namespace lr;
using lrtest::CheckCoordinates;
using lrtest::Probe;
using lrtest::RandomTensor;

namespace {

LayerSpec Spec(std::string name, LayerKind kind, std::size_t out = 0, std::size_t kernel = 1,
               std::size_t stride = 1, std::size_t pad = 0)
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

/// Checks input and parameter gradients of a layer against central
/// differences of sum(w * y). Each evaluation runs on a fresh clone so that
/// stateful layers (BRN) see the same state every time.
void CheckLayer(Layer &proto, Tensor x, double h, std::size_t coords = 12,
                std::function<bool(Tensor const &, std::size_t)> usable = {})
{
  SeededRng rng(99);
  LayerCache cache;
  auto       live = proto.Clone();
  Tensor     y    = live->Train(x, cache);
  Tensor     w    = RandomTensor(y.shape(), rng);
  std::vector<Tensor> grads;
  Tensor dx = proto.Clone()->Backward(w, cache, grads, true);
  // Backward must not depend on the clone it runs on beyond the cache.
  std::vector<Tensor> grads_live;
  Tensor dx_live = live->Backward(w, cache, grads_live, true);
  CHECK(MaxAbsDiff(dx, dx_live) == 0.0);

  auto loss_for = [&](Layer &l) {
    auto       fresh = l.Clone();
    LayerCache c;
    return Probe(fresh->Train(x, c), w);
  };

  auto rx = CheckCoordinates(
      x, dx, [&] { return loss_for(proto); }, rng, coords, h,
      usable ? std::function<bool(std::size_t)>([&](std::size_t k) { return usable(x, k); })
             : std::function<bool(std::size_t)>{});
  CHECK(rx.checked == coords);
  CHECK(rx.worst < 1e-3);

  auto params = proto.Params();
  REQUIRE(params.size() == grads.size());
  for (std::size_t p = 0; p < params.size(); ++p)
  {
    auto rp = CheckCoordinates(*params[p], grads[p], [&] { return loss_for(proto); }, rng, coords, h);
    CHECK(rp.worst < 1e-3);
  }
}

}  // namespace

TEST_CASE("dense layer gradients")
{
  SeededRng  rng(1);
  DenseLayer layer(Spec("fc", LayerKind::kDense, 5), 7);
  layer.Initialize(rng);
  CheckLayer(layer, RandomTensor({4, 7}, rng), 1e-2);
}

TEST_CASE("conv layer gradients with stride and padding")
{
  SeededRng rng(2);
  ConvLayer layer(Spec("conv", LayerKind::kConv, 4, 3, 2, 1), 3);
  layer.Initialize(rng);
  layer.bias = RandomTensor({4}, rng, 0.1);
  CheckLayer(layer, RandomTensor({2, 3, 7, 7}, rng), 1e-2);
}

TEST_CASE("depthwise conv layer gradients")
{
  SeededRng rng(3);
  LayerSpec spec = Spec("dw", LayerKind::kDwConv, 0, 3, 1, 1);
  spec.bias      = false;
  ConvLayer layer(spec, 4);
  layer.Initialize(rng);
  CheckLayer(layer, RandomTensor({2, 4, 5, 5}, rng), 1e-2);
}

TEST_CASE("relu gradients away from the kink")
{
  SeededRng rng(4);
  ReluLayer layer(Spec("relu", LayerKind::kRelu));
  CheckLayer(layer, RandomTensor({3, 10}, rng), 1e-3, 12,
             [](Tensor const &x, std::size_t k) { return std::fabs(x[k]) > 0.05f; });
}

TEST_CASE("average pool and flatten gradients")
{
  SeededRng    rng(5);
  AvgPoolLayer pool(Spec("pool", LayerKind::kAvgPool));
  CheckLayer(pool, RandomTensor({2, 3, 4, 4}, rng), 1e-2);
  FlattenLayer flat(Spec("flat", LayerKind::kFlatten));
  CheckLayer(flat, RandomTensor({2, 3, 2, 2}, rng), 1e-2);
}

TEST_CASE("brn gradients on the batch path with warm-started moments")
{
  // The first batch seeds the moving moments, so r = 1 and d = 0 and the
  // layer reduces to batch normalization.
  SeededRng rng(6);
  BrnLayer  layer(Spec("brn", LayerKind::kBrn), 3);
  layer.gamma = RandomTensor({3}, rng, 0.5);
  for (std::size_t c = 0; c < 3; ++c)
  {
    layer.gamma[c] += 1.0f;
  }
  layer.beta = RandomTensor({3}, rng, 0.1);
  CheckLayer(layer, RandomTensor({4, 3, 3, 3}, rng, 2.0), 1e-2);
}

TEST_CASE("brn gradients with clipped correction factors")
{
  // Moving moments far from the batch statistics saturate r and d, so they
  // are locally constant and the true derivative matches the hand-written one.
  SeededRng rng(7);
  BrnLayer  layer(Spec("brn", LayerKind::kBrn), 2);
  layer.SetMovingMoments({5.0f, -5.0f}, {0.1f, 0.1f});
  layer.beta = RandomTensor({2}, rng, 0.1);
  CheckLayer(layer, RandomTensor({6, 2}, rng), 1e-2);

  LayerCache cache;
  auto       live = layer.Clone();
  live->Train(RandomTensor({6, 2}, rng), cache);
  auto const &brn = static_cast<BrnLayer const &>(*live);
  CHECK(brn.last_r[0] == doctest::Approx(1.25));
  CHECK(brn.last_d[0] == doctest::Approx(-0.5));
  CHECK(brn.last_d[1] == doctest::Approx(0.5));
}

TEST_CASE("brn gradients on the moving path")
{
  SeededRng rng(8);
  BrnLayer  layer(Spec("brn", LayerKind::kBrn), 3);
  layer.SetMovingMoments({0.5f, -0.2f, 0.0f}, {1.5f, 0.7f, 2.0f});
  layer.moments_frozen = true;
  layer.gamma          = RandomTensor({3}, rng, 0.3);
  CheckLayer(layer, RandomTensor({5, 3, 2, 2}, rng), 1e-2);
}

TEST_CASE("brn forward follows the renormalization formula")
{
  LayerSpec spec     = Spec("brn", LayerKind::kBrn);
  spec.brn.avg_rate  = 0.9;
  BrnLayer layer(spec, 1);
  layer.SetMovingMoments({1.0f}, {2.0f});

  Tensor     x({4, 1}, std::vector<float>{1, 2, 3, 4});
  LayerCache cache;
  Tensor     y = layer.Train(x, cache);

  double const mu_b    = 2.5;
  double const sigma_b = std::sqrt(1.25 + 1e-5);
  double const r       = std::clamp(sigma_b / 2.0, 0.8, 1.25);
  double const d       = std::clamp((mu_b - 1.0) / 2.0, -0.5, 0.5);
  for (std::size_t i = 0; i < 4; ++i)
  {
    double expect = (x[i] - mu_b) / sigma_b * r + d;
    CHECK(y[i] == doctest::Approx(expect).epsilon(1e-5));
  }
  // Moving moments: m <- a m + (1 - a) batch statistic.
  CHECK(layer.mu_mov[0] == doctest::Approx(0.9 * 1.0 + 0.1 * mu_b).epsilon(1e-6));
  CHECK(layer.sigma_mov[0] == doctest::Approx(0.9 * 2.0 + 0.1 * sigma_b).epsilon(1e-6));

  // Eval never moves the moments.
  float const before = layer.mu_mov[0];
  Tensor      e      = layer.Infer(x);
  CHECK(layer.mu_mov[0] == before);
  CHECK(e[0] == doctest::Approx((1.0 - layer.mu_mov[0]) / layer.sigma_mov[0]).epsilon(1e-5));
}

TEST_CASE("frozen brn moments stay put in train mode")
{
  BrnLayer layer(Spec("brn", LayerKind::kBrn), 2);
  layer.SetMovingMoments({0.1f, 0.2f}, {1.0f, 2.0f});
  layer.moments_frozen = true;
  SeededRng  rng(9);
  Tensor     x = RandomTensor({8, 2}, rng);
  LayerCache cache;
  Tensor     y = layer.Train(x, cache);
  CHECK(layer.mu_mov[0] == 0.1f);
  CHECK(layer.sigma_mov[1] == 2.0f);
  CHECK(y == layer.Infer(x));
}

TEST_CASE("softmax cross-entropy gradient")
{
  SeededRng        rng(10);
  Tensor           logits = RandomTensor({5, 4}, rng);
  std::vector<int> labels{0, 3, 1, 1, 2};
  SoftmaxXent      xent = SoftmaxCrossEntropy(logits, labels);
  auto r = lrtest::CheckCoordinates(
      logits, xent.dlogits, [&] { return SoftmaxCrossEntropy(logits, labels).loss; }, rng, 12, 1e-2);
  CHECK(r.worst < 1e-3);
  std::vector<int> bad{0, 4, 1, 1, 2};
  CHECK_THROWS_AS(SoftmaxCrossEntropy(logits, bad), Error);
}

TEST_CASE("conv output extent floors")
{
  CHECK(ConvOutExtent(16, 3, 2, 1) == 8);
  CHECK(ConvOutExtent(5, 3, 1, 0) == 3);
  CHECK_THROWS_AS(ConvOutExtent(2, 5, 1, 0), Error);
}

TEST_CASE("layer kinds parse by name")
{
  CHECK(ParseLayerKind("dwconv") == LayerKind::kDwConv);
  CHECK(std::string(ToString(LayerKind::kBrn)) == "brn");
  CHECK_THROWS_AS(ParseLayerKind("pool3d"), Error);
}

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
#include "latent_replay/network.hpp"

#include "../support.hpp"
#include "doctest.h"

#include <filesystem>

using namespace lr;
using lrtest::RandomTensor;

namespace {

std::vector<int> Labels(std::size_t n, std::size_t classes)
{
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    y[i] = static_cast<int>((i * 7 + 3) % classes);
  }
  return y;
}

double TrainLoss(Network const &proto, Tensor const &x, std::vector<int> const &y)
{
  Network net = proto;
  auto    fwd = net.Forward(x, Mode::kTrain);
  return SoftmaxCrossEntropy(fwd.logits, y).loss;
}

}  // namespace

TEST_CASE("full backward matches finite differences")
{
  Network   net(lrtest::ToySpec(), 5);
  SeededRng rng(21);
  Tensor    x = RandomTensor({6, 6}, rng);
  auto      y = Labels(6, 4);

  Network live = net;
  auto    fwd  = live.Forward(x, Mode::kTrain);
  auto    xent = SoftmaxCrossEntropy(fwd.logits, y);
  auto    g    = live.Backward(xent.dlogits, 6);

  for (std::size_t l = 0; l < net.num_layers(); ++l)
  {
    auto params = net.layer(l).Params();
    REQUIRE(g.layers[l].size() == params.size());
    for (std::size_t p = 0; p < params.size(); ++p)
    {
      auto r = lrtest::CheckCoordinates(*params[p], g.layers[l][p], [&] { return TrainLoss(net, x, y); }, rng, 6,
                                        1e-2);
      CHECK(r.worst < 1e-3);
    }
  }
}

TEST_CASE("latent replay rows join at the tap")
{
  Network net(lrtest::ToySpec(), 9);
  net.set_all_moments_frozen(true);
  SeededRng rng(4);
  Tensor    xn = RandomTensor({3, 6}, rng);
  Tensor    xr = RandomTensor({5, 6}, rng);

  // With moments frozen the lower part is a per-row function, so stored tap
  // activations reproduce the native forward exactly.
  Network a      = net;
  Network b      = net;
  Tensor  latent = net.InferTap(xr);
  auto    fa     = a.ForwardConcat(xn, latent, Mode::kTrain);
  auto    fb     = b.Forward(ConcatRows(xn, xr), Mode::kTrain);
  CHECK(fa.logits.shape() == Shape{8, 4});
  CHECK(MaxAbsDiff(fa.logits, fb.logits) < 1e-6);
  CHECK(fa.tapped.shape() == Shape{3, 8});
  CHECK(MaxAbsDiff(fa.tapped, net.InferTap(xn)) < 1e-6);

  Tensor dlogits = RandomTensor({8, 4}, rng);
  auto   ga      = a.Backward(dlogits, 3);
  auto   gb      = b.Backward(dlogits, 8);
  std::size_t const head = net.head_index();
  for (std::size_t p = 0; p < 2; ++p)
  {
    CHECK(MaxAbsDiff(ga.layers[head][p], gb.layers[head][p]) < 1e-5);
  }

  // Below the tap only the native rows contribute: the same gradient comes
  // from a native-only pass fed the native rows of dlogits.
  Network c  = net;
  c.Forward(xn, Mode::kTrain);
  auto gc = c.Backward(dlogits.rows(0, 3), 3);
  CHECK(MaxAbsDiff(ga.layers[0][0], gc.layers[0][0]) < 1e-5);
  CHECK(MaxAbsDiff(ga.layers[0][1], gc.layers[0][1]) < 1e-5);
}

TEST_CASE("frozen lower layers get no gradient and do not move")
{
  Network net(lrtest::ToySpec(), 3);
  net.set_frozen_below_tap(true);
  SeededRng rng(8);
  Tensor    x      = RandomTensor({4, 6}, rng);
  Tensor    before = *net.layer(0).Params()[0];
  Tensor    head   = net.head().weight;

  auto fwd  = net.Forward(x, Mode::kTrain);
  auto xent = SoftmaxCrossEntropy(fwd.logits, Labels(4, 4));
  auto g    = net.Backward(xent.dlogits, 4);
  CHECK_FALSE(g.has(0));
  CHECK_FALSE(g.has(net.tap_index()));
  CHECK(g.has(net.head_index()));
  CHECK(net.lr_mult(0) == 0.0);

  net.SgdStep(g, 0.1);
  CHECK(*net.layer(0).Params()[0] == before);
  CHECK_FALSE(net.head().weight == head);
}

TEST_CASE("eval forward leaves state untouched")
{
  Network net(lrtest::ToySpec(), 1);
  SeededRng rng(2);
  net.Forward(RandomTensor({5, 6}, rng), Mode::kTrain);
  auto const &brn = static_cast<BrnLayer const &>(net.layer(1));
  Tensor      mu  = brn.mu_mov;
  Tensor      x   = RandomTensor({3, 6}, rng);
  Tensor      a   = net.Forward(x, Mode::kEval).logits;
  CHECK(brn.mu_mov == mu);
  CHECK(a == net.Infer(x));
  CHECK(MaxAbsDiff(net.InferFrom(net.InferTap(x)), a) < 1e-6);
}

TEST_CASE("network checkpoint round trip")
{
  Network   net(lrtest::ToySpec(), 11);
  SeededRng rng(3);
  net.Forward(RandomTensor({5, 6}, rng), Mode::kTrain);
  auto const dir = std::filesystem::temp_directory_path() / "lr_net_ckpt";
  std::filesystem::remove_all(dir);
  net.SaveCheckpoint(dir);

  Network other(lrtest::ToySpec(), 12);
  Tensor  x = RandomTensor({4, 6}, rng);
  CHECK_FALSE(other.Infer(x) == net.Infer(x));
  other.LoadCheckpoint(dir);
  CHECK(other.Infer(x) == net.Infer(x));
  std::filesystem::remove_all(dir);
}

TEST_CASE("network spec parsing")
{
  auto spec = lrtest::ToySpec();
  CHECK(spec.layers.size() == 4);
  CHECK(spec.layers[1].brn.avg_rate == 0.9);
  auto again = ParseNetworkSpec(NetworkSpecToJson(spec));
  CHECK(again.layers.size() == 4);
  CHECK(again.tap == "relu1");

  CHECK_THROWS_AS(ParseNetworkSpec(R"({"input":[6],"classes":4,"tap":"x","head":"fc","layers":[
      {"name":"fc","kind":"dense","out":4,"colour":1}]})"),
                  Error);
  CHECK_THROWS_AS(Network(ParseNetworkSpec(R"({"input":[6],"classes":4,"tap":"missing","head":"fc","layers":[
      {"name":"fc","kind":"dense","out":4}]})"),
                          1),
                  Error);

  Network net(spec, 1);
  CHECK(net.index_of("relu1") == 2);
  CHECK(net.tap_shape() == Shape{8});
  net.set_tap("input");
  CHECK(net.tap_index() == Network::kInputTap);
  CHECK_THROWS_AS(net.set_tap("nope"), Error);
}

TEST_CASE("shipped tinynic network")
{
  Network net(LoadNetworkSpec(lrtest::DataPath("nets/tinynic.json")), 1);
  CHECK(net.input_shape() == Shape{1, 16, 16});
  CHECK(net.classes() == 10);
  CHECK(net.tap_name() == "relu2");
  CHECK(net.tap_shape() == Shape{16, 8, 8});
  SeededRng rng(1);
  CHECK(net.Infer(RandomTensor({2, 1, 16, 16}, rng)).shape() == Shape{2, 10});
}

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
#include "latent_replay/rng.hpp"
#include "latent_replay/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace lrtest {

inline lr::Tensor RandomTensor(lr::Shape shape, lr::SeededRng &rng, double scale = 1.0)
{
  lr::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
  {
    t[i] = static_cast<float>(rng.Normal(0.0, scale));
  }
  return t;
}

/// Sum of w * y in double, a scalar probe whose gradient wrt y is w.
inline double Probe(lr::Tensor const &y, lr::Tensor const &w)
{
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
  {
    s += static_cast<double>(y[i]) * w[i];
  }
  return s;
}

/// Central difference of f with respect to t[k]; t is restored afterwards.
inline double CentralDiff(lr::Tensor &t, std::size_t k, std::function<double()> const &f, double h)
{
  float const keep = t[k];
  t[k]             = static_cast<float>(keep + h);
  double const up  = f();
  t[k]             = static_cast<float>(keep - h);
  double const dn  = f();
  t[k]             = keep;
  double const step = (static_cast<double>(static_cast<float>(keep + h)) -
                       static_cast<double>(static_cast<float>(keep - h)));
  return (up - dn) / step;
}

inline double RelErr(double analytic, double numeric)
{
  double const scale = std::max({std::fabs(analytic), std::fabs(numeric), 5e-2});
  return std::fabs(analytic - numeric) / scale;
}

struct GradCheck
{
  std::size_t checked{0};
  double      worst{0.0};
};

/// Compares analytic[k] with central differences of f at `count` random
/// coordinates of t, skipping those rejected by `usable`.
inline GradCheck CheckCoordinates(lr::Tensor &t, lr::Tensor const &analytic, std::function<double()> const &f,
                                  lr::SeededRng &rng, std::size_t count, double h,
                                  std::function<bool(std::size_t)> const &usable = {})
{
  GradCheck out;
  for (std::size_t tries = 0; out.checked < count && tries < 50 * count; ++tries)
  {
    std::size_t const k = static_cast<std::size_t>(rng.Below(t.size()));
    if (usable && !usable(k))
    {
      continue;
    }
    double const numeric = CentralDiff(t, k, f, h);
    out.worst            = std::max(out.worst, RelErr(analytic[k], numeric));
    ++out.checked;
  }
  return out;
}

inline lr::NetworkSpec ToySpec()
{
  return lr::ParseNetworkSpec(R"({
    "input": [6], "classes": 4, "tap": "relu1", "head": "fc2",
    "layers": [
      {"name": "fc1", "kind": "dense", "out": 8},
      {"name": "brn1", "kind": "brn", "avg_rate": 0.9},
      {"name": "relu1", "kind": "relu"},
      {"name": "fc2", "kind": "dense", "out": 4}
    ]})");
}

inline std::string DataPath(std::string const &rel)
{
  return std::string(LR_TEST_DATA_DIR) + "/" + rel;
}

}  // namespace lrtest

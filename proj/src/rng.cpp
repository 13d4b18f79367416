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

#include "latent_replay/rng.hpp"

#include "latent_replay/error.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace lr {

std::uint64_t SplitMix64(std::uint64_t &state)
{
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z               = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z               = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

inline std::uint64_t Rotl(std::uint64_t x, int k)
{
  return (x << k) | (x >> (64 - k));
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed)
  : seed_(seed)
{
  std::uint64_t sm = seed;
  for (auto &w : s_)
  {
    w = SplitMix64(sm);
  }
}

std::uint64_t SeededRng::NextU64()
{
  std::uint64_t const result = Rotl(s_[1] * 5, 7) * 9;
  std::uint64_t const t      = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = Rotl(s_[3], 45);
  return result;
}

double SeededRng::Uniform()
{
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double SeededRng::Uniform(double lo, double hi)
{
  return lo + (hi - lo) * Uniform();
}

std::uint64_t SeededRng::Below(std::uint64_t n)
{
  Require(n > 0, ErrorCode::kArithmetic, "Below(0) is undefined");
  std::uint64_t const threshold = (0 - n) % n;
  for (;;)
  {
    std::uint64_t r = NextU64();
    if (r >= threshold)
    {
      return r % n;
    }
  }
}

double SeededRng::Normal()
{
  double const u1 = 1.0 - Uniform();
  double const u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double SeededRng::Normal(double mean, double stddev)
{
  return mean + stddev * Normal();
}

std::vector<std::size_t> SeededRng::SampleWithoutReplacement(std::size_t n, std::size_t k)
{
  Require(k <= n, ErrorCode::kIndex,
          "cannot draw " + std::to_string(k) + " distinct items from " + std::to_string(n));
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i)
  {
    std::size_t j = i + static_cast<std::size_t>(Below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::vector<std::size_t> SeededRng::SampleWithReplacement(std::size_t n, std::size_t k)
{
  Require(n > 0 || k == 0, ErrorCode::kIndex, "cannot draw from an empty population");
  std::vector<std::size_t> out(k);
  for (auto &v : out)
  {
    v = static_cast<std::size_t>(Below(n));
  }
  return out;
}

std::vector<std::size_t> SeededRng::Permutation(std::size_t n)
{
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Shuffle(std::span<std::size_t>(p));
  return p;
}

SeededRng SeededRng::Fork()
{
  return SeededRng(NextU64());
}

}  // namespace lr

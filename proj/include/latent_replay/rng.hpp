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

#include <cstddef>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace lr {

// Pinned generator so that memory sampling and scenario generation are
// reproducible across platforms and ports:
//
//   state     : xoshiro256** (Blackman & Vigna), four 64-bit words
//   seeding   : the four words are successive outputs of splitmix64(seed)
//   Uniform() : (NextU64() >> 11) * 2^-53, in [0, 1)
//   Below(n)  : rejection sampling, reject r < (2^64 - n) mod n, return r % n
//   Normal()  : Box-Muller, u1 = 1 - Uniform(), u2 = Uniform(),
//               returns sqrt(-2 ln u1) * cos(2 pi u2); no cached second value
//   Shuffle   : Fisher-Yates from the back, j = Below(i + 1)
//   Sample    : partial Fisher-Yates over 0..n-1, first k slots taken
class SeededRng
{
public:
  explicit SeededRng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept
  {
    return seed_;
  }

  std::uint64_t NextU64();
  double        Uniform();
  double        Uniform(double lo, double hi);
  std::uint64_t Below(std::uint64_t n);
  double        Normal();
  double        Normal(double mean, double stddev);

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> SampleWithoutReplacement(std::size_t n, std::size_t k);
  /// k indices from [0, n), each drawn independently.
  std::vector<std::size_t> SampleWithReplacement(std::size_t n, std::size_t k);
  std::vector<std::size_t> Permutation(std::size_t n);

  template <typename T>
  void Shuffle(std::span<T> items)
  {
    for (std::size_t i = items.size(); i > 1; --i)
    {
      std::size_t j = static_cast<std::size_t>(Below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent child stream; used to give sub-components their own
  /// generator without perturbing the parent sequence more than one draw.
  SeededRng Fork();

  std::array<std::uint64_t, 4> state() const noexcept
  {
    return {s_[0], s_[1], s_[2], s_[3]};
  }
  void set_state(std::array<std::uint64_t, 4> const &state) noexcept
  {
    for (int i = 0; i < 4; ++i)
    {
      s_[i] = state[static_cast<std::size_t>(i)];
    }
  }

private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

std::uint64_t SplitMix64(std::uint64_t &state);

}  // namespace lr

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

#include "latent_replay/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lr {

// LRT1 file layout, all little-endian:
//   bytes 0..3   magic "LRT1"
//   u32          rank
//   u32 x rank   extents
//   f32 x N      payload, N = product of extents
inline constexpr char kTensorMagic[4] = {'L', 'R', 'T', '1'};

void WriteTensor(std::ostream &os, Tensor const &t);
Tensor ReadTensor(std::istream &is);

void SaveTensor(std::filesystem::path const &path, Tensor const &t);
Tensor LoadTensor(std::filesystem::path const &path);

std::vector<std::uint8_t> EncodeTensor(Tensor const &t);
Tensor DecodeTensor(std::vector<std::uint8_t> const &bytes);

}  // namespace lr

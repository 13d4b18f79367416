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

#include "latent_replay/tensor_io.hpp"

#include "latent_replay/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace lr {
namespace {

static_assert(sizeof(float) == 4);

void PutU32(std::vector<std::uint8_t> &out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i)
  {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
  }
}

std::uint32_t GetU32(std::uint8_t const *p)
{
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Guards against absurd headers in corrupted files before allocating.
constexpr std::uint32_t kMaxRank     = 16;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

}  // namespace

std::vector<std::uint8_t> EncodeTensor(Tensor const &t)
{
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  PutU32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape())
  {
    Require(e <= 0xffffffffu, ErrorCode::kFormat, "extent does not fit in u32");
    PutU32(out, static_cast<std::uint32_t>(e));
  }
  for (float v : t.data())
  {
    PutU32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Tensor DecodeTensor(std::vector<std::uint8_t> const &bytes)
{
  Require(bytes.size() >= 8, ErrorCode::kFormat, "tensor blob too short for LRT1 header");
  Require(std::memcmp(bytes.data(), kTensorMagic, 4) == 0, ErrorCode::kFormat,
          "bad magic, expected LRT1");
  std::uint32_t rank = GetU32(bytes.data() + 4);
  Require(rank <= kMaxRank, ErrorCode::kFormat, "implausible tensor rank " + std::to_string(rank));
  Require(bytes.size() >= 8 + 4ull * rank, ErrorCode::kFormat, "truncated LRT1 extents");
  Shape         shape(rank);
  std::uint64_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i)
  {
    shape[i] = GetU32(bytes.data() + 8 + 4 * i);
    n *= shape[i];
    Require(n <= kMaxElements, ErrorCode::kFormat, "implausible tensor size");
  }
  std::size_t const offset = 8 + 4ull * rank;
  Require(bytes.size() == offset + 4 * n, ErrorCode::kFormat,
          "LRT1 payload length mismatch: header says " + std::to_string(n) + " floats");
  std::vector<float> data(n);
  for (std::uint64_t i = 0; i < n; ++i)
  {
    data[i] = std::bit_cast<float>(GetU32(bytes.data() + offset + 4 * i));
  }
  return Tensor(std::move(shape), std::move(data));
}

void WriteTensor(std::ostream &os, Tensor const &t)
{
  auto bytes = EncodeTensor(t);
  os.write(reinterpret_cast<char const *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  Require(static_cast<bool>(os), ErrorCode::kIo, "failed writing tensor");
}

Tensor ReadTensor(std::istream &is)
{
  std::uint8_t header[8];
  is.read(reinterpret_cast<char *>(header), 8);
  Require(is.gcount() == 8, ErrorCode::kFormat, "truncated LRT1 header");
  Require(std::memcmp(header, kTensorMagic, 4) == 0, ErrorCode::kFormat, "bad magic, expected LRT1");
  std::uint32_t rank = GetU32(header + 4);
  Require(rank <= kMaxRank, ErrorCode::kFormat, "implausible tensor rank " + std::to_string(rank));
  std::vector<std::uint8_t> bytes(header, header + 8);
  bytes.resize(8 + 4ull * rank);
  is.read(reinterpret_cast<char *>(bytes.data() + 8), static_cast<std::streamsize>(4ull * rank));
  Require(static_cast<std::size_t>(is.gcount()) == 4ull * rank, ErrorCode::kFormat,
          "truncated LRT1 extents");
  std::uint64_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i)
  {
    n *= GetU32(bytes.data() + 8 + 4 * i);
    Require(n <= kMaxElements, ErrorCode::kFormat, "implausible tensor size");
  }
  std::size_t const offset = bytes.size();
  bytes.resize(offset + 4 * n);
  is.read(reinterpret_cast<char *>(bytes.data() + offset), static_cast<std::streamsize>(4 * n));
  Require(static_cast<std::uint64_t>(is.gcount()) == 4 * n, ErrorCode::kFormat,
          "truncated LRT1 payload");
  return DecodeTensor(bytes);
}

void SaveTensor(std::filesystem::path const &path, Tensor const &t)
{
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(os), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  WriteTensor(os, t);
}

Tensor LoadTensor(std::filesystem::path const &path)
{
  std::ifstream is(path, std::ios::binary);
  Require(static_cast<bool>(is), ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  try
  {
    return DecodeTensor(bytes);
  }
  catch (Error const &e)
  {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace lr

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

#include "latent_replay/replay.hpp"

#include "latent_replay/error.hpp"
#include "latent_replay/tensor_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lr {

char const *ToString(ReplayKind kind)
{
  return kind == ReplayKind::kNative ? "native" : "latent";
}

ReplayKind ParseReplayKind(std::string const &name)
{
  if (name == "native")
  {
    return ReplayKind::kNative;
  }
  if (name == "latent")
  {
    return ReplayKind::kLatent;
  }
  Fail(ErrorCode::kConfig, "unknown replay kind '" + name + "' (expected native or latent)");
}

// ---------------------------------------------------------------- memory

ReplayMemory::ReplayMemory(ReplayKind kind, std::size_t capacity, std::uint64_t seed, std::string tap)
  : kind_(kind)
  , capacity_(capacity)
  , tap_(std::move(tap))
  , rng_(seed)
{
  if (kind_ == ReplayKind::kNative)
  {
    tap_ = "input";
  }
}

MemoryUpdateReport ReplayMemory::Update(Tensor const &payloads, std::span<int const> labels, int batch_index,
                                        Tensor const *sources)
{
  MemoryUpdateReport report;
  std::size_t const  n = payloads.rank() ? payloads.dim(0) : 0;
  if (n == 0)
  {
    report.empty_batch = true;
    return report;
  }
  Require(batch_index >= 1, ErrorCode::kIndex, "batch index starts at 1");
  Require(batch_index > last_batch_, ErrorCode::kState,
          "batch index must strictly increase (got " + std::to_string(batch_index) + " after " +
              std::to_string(last_batch_) + ")");
  Require(labels.size() == n, ErrorCode::kShape, "label count does not match payload rows");
  Shape const row = RowShape(payloads.shape());
  if (!payload_shape_.empty())
  {
    Require(row == payload_shape_, ErrorCode::kShape,
            "payload rows " + ShapeString(row) + " differ from stored " + ShapeString(payload_shape_));
  }
  if (sources != nullptr)
  {
    Require(sources->rank() && sources->dim(0) == n, ErrorCode::kShape, "source rows do not match payload rows");
  }
  last_batch_ = batch_index;
  if (capacity_ == 0)
  {
    return report;
  }

  auto const i = static_cast<std::size_t>(batch_index);
  report.h     = std::min(capacity_ / i, n);
  report.replaced = batch_index == 1 ? 0 : std::min(report.h, items_.size());
  report.added    = std::min(report.h, capacity_ - (items_.size() - report.replaced));

  std::vector<std::size_t> add     = rng_.SampleWithoutReplacement(n, report.added);
  std::vector<std::size_t> replace = rng_.SampleWithoutReplacement(items_.size(), report.replaced);

  std::sort(replace.begin(), replace.end());
  for (auto it = replace.rbegin(); it != replace.rend(); ++it)
  {
    items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(*it));
  }
  for (std::size_t idx : add)
  {
    ReplayItem item;
    item.payload      = payloads.rows(idx, 1).reshaped(row);
    item.label        = labels[idx];
    item.origin_batch = batch_index;
    if (sources != nullptr)
    {
      item.source = sources->rows(idx, 1).reshaped(RowShape(sources->shape()));
    }
    items_.push_back(std::move(item));
  }
  payload_shape_ = row;
  return report;
}

Tensor ReplayMemory::Payloads(std::span<std::size_t const> indices) const
{
  Require(!indices.empty(), ErrorCode::kEmptyBatch, "no replay indices");
  std::vector<float> data;
  data.reserve(indices.size() * ShapeSize(payload_shape_));
  for (auto idx : indices)
  {
    Require(idx < items_.size(), ErrorCode::kIndex, "replay index out of range");
    auto const &p = items_[idx].payload.data();
    data.insert(data.end(), p.begin(), p.end());
  }
  return Tensor(WithBatch(indices.size(), payload_shape_), std::move(data));
}

std::vector<int> ReplayMemory::Labels(std::span<std::size_t const> indices) const
{
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto idx : indices)
  {
    Require(idx < items_.size(), ErrorCode::kIndex, "replay index out of range");
    out.push_back(items_[idx].label);
  }
  return out;
}

std::vector<int> ReplayMemory::AllLabels() const
{
  std::vector<int> out;
  out.reserve(items_.size());
  for (auto const &it : items_)
  {
    out.push_back(it.label);
  }
  return out;
}

std::vector<std::size_t> ReplayMemory::OccupancyByBatch(int num_batches) const
{
  std::vector<std::size_t> occ(static_cast<std::size_t>(num_batches) + 1, 0);
  for (auto const &it : items_)
  {
    if (it.origin_batch >= 0 && it.origin_batch <= num_batches)
    {
      ++occ[static_cast<std::size_t>(it.origin_batch)];
    }
  }
  return occ;
}

std::size_t ReplayMemory::footprint_elements() const noexcept
{
  return items_.size() * ShapeSize(payload_shape_);
}

bool ReplayMemory::has_sources() const noexcept
{
  return !items_.empty() && std::all_of(items_.begin(), items_.end(), [](auto const &it) { return it.source.has_value(); });
}

void ReplayMemory::SaveCheckpoint(std::filesystem::path const &dir) const
{
  using nlohmann::json;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  Require(!ec, ErrorCode::kIo, "cannot create " + dir.string());

  json manifest;
  manifest["kind"]          = ToString(kind_);
  manifest["tap"]           = tap_;
  manifest["capacity"]      = capacity_;
  manifest["item_count"]    = items_.size();
  manifest["payload_shape"] = payload_shape_;
  manifest["last_batch"]    = last_batch_;
  manifest["seed"]          = std::to_string(rng_.seed());
  json state                = json::array();
  for (auto w : rng_.state())
  {
    state.push_back(std::to_string(w));
  }
  manifest["rng_state"] = state;
  json labels = json::array(), origins = json::array();
  for (auto const &it : items_)
  {
    labels.push_back(it.label);
    origins.push_back(it.origin_batch);
  }
  manifest["labels"]         = labels;
  manifest["origin_batches"] = origins;
  manifest["payload_file"]   = "payload.lrt";
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';

  if (!items_.empty())
  {
    std::vector<std::size_t> all(items_.size());
    for (std::size_t k = 0; k < all.size(); ++k)
    {
      all[k] = k;
    }
    SaveTensor(dir / "payload.lrt", Payloads(all));
  }
  else
  {
    SaveTensor(dir / "payload.lrt", Tensor(WithBatch(0, payload_shape_)));
  }
}

ReplayMemory ReplayMemory::LoadCheckpoint(std::filesystem::path const &dir)
{
  using nlohmann::json;
  std::ifstream is(dir / "manifest.json");
  Require(static_cast<bool>(is), ErrorCode::kIo, "cannot open " + (dir / "manifest.json").string());
  json manifest;
  try
  {
    manifest = json::parse(is);
    ReplayMemory rm(ParseReplayKind(manifest.at("kind").get<std::string>()), manifest.at("capacity").get<std::size_t>(),
                    std::stoull(manifest.at("seed").get<std::string>()), manifest.at("tap").get<std::string>());
    std::array<std::uint64_t, 4> state{};
    for (std::size_t k = 0; k < 4; ++k)
    {
      state[k] = std::stoull(manifest.at("rng_state").at(k).get<std::string>());
    }
    rm.rng_.set_state(state);
    rm.last_batch_    = manifest.at("last_batch").get<int>();
    rm.payload_shape_ = manifest.at("payload_shape").get<Shape>();
    auto labels       = manifest.at("labels").get<std::vector<int>>();
    auto origins      = manifest.at("origin_batches").get<std::vector<int>>();
    auto count        = manifest.at("item_count").get<std::size_t>();
    Require(labels.size() == count && origins.size() == count, ErrorCode::kFormat, "replay manifest item count mismatch");
    Tensor payload = LoadTensor(dir / manifest.at("payload_file").get<std::string>());
    Require(payload.rank() == rm.payload_shape_.size() + 1 && payload.dim(0) == count &&
                RowShape(payload.shape()) == rm.payload_shape_,
            ErrorCode::kFormat, "replay payload shape does not match manifest");
    for (std::size_t k = 0; k < count; ++k)
    {
      ReplayItem item;
      item.payload      = payload.rows(k, 1).reshaped(rm.payload_shape_);
      item.label        = labels[k];
      item.origin_batch = origins[k];
      rm.items_.push_back(std::move(item));
    }
    return rm;
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kFormat, std::string("malformed replay manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------- mini-batches

MiniBatchPlan ComposeMiniBatch(std::size_t batch_size, std::size_t rm_items, std::size_t mb)
{
  Require(mb >= 1, ErrorCode::kConfig, "mini-batch size must be >= 1");
  std::size_t const total = batch_size + rm_items;
  if (rm_items == 0 || total == 0)
  {
    return {mb, 0};
  }
  // round(mb * B / total), halves rounded up, in exact integer arithmetic.
  std::size_t const n_native = (2 * mb * batch_size + total) / (2 * total);
  return {n_native, mb - n_native};
}

ReplayDraw DrawReplayIndices(std::size_t rm_items, std::size_t count, SeededRng &rng)
{
  ReplayDraw draw;
  if (count == 0)
  {
    return draw;
  }
  Require(rm_items > 0, ErrorCode::kEmptyBatch, "cannot draw replay patterns from an empty memory");
  if (count <= rm_items)
  {
    draw.indices = rng.SampleWithoutReplacement(rm_items, count);
  }
  else
  {
    draw.indices          = rng.SampleWithReplacement(rm_items, count);
    draw.with_replacement = true;
  }
  return draw;
}

// ---------------------------------------------------------------- latent pre-caching

namespace {

Tensor AsBatchOfOne(Tensor const &frame, Shape const &input)
{
  if (frame.shape() == input)
  {
    return frame.reshaped(WithBatch(1, input));
  }
  Require(frame.rank() == input.size() + 1 && frame.dim(0) == 1 && RowShape(frame.shape()) == input, ErrorCode::kShape,
          "frame shape " + ShapeString(frame.shape()) + " does not match network input " + ShapeString(input));
  return frame;
}

void RequireFrozenLower(Network const &net)
{
  Require(net.tap_index() == Network::kInputTap || net.frozen_below_tap(), ErrorCode::kState,
          "latent pre-caching needs the layers at and below the tap frozen");
}

}  // namespace

std::vector<Tensor> PrecomputeLatents(Network const &net, std::span<Tensor const> frames)
{
  RequireFrozenLower(net);
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (auto const &f : frames)
  {
    out.push_back(net.InferTap(AsBatchOfOne(f, net.input_shape())).reshaped(net.tap_shape()));
  }
  return out;
}

LatentPipeline::LatentPipeline(Network const &net)
  : net_(net)
{
  RequireFrozenLower(net);
  worker_ = std::thread([this] { Run(); });
}

LatentPipeline::~LatentPipeline()
{
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void LatentPipeline::Push(Tensor frame)
{
  Tensor batch = AsBatchOfOne(frame, net_.input_shape());
  {
    std::lock_guard lock(mutex_);
    pending_.push_back(std::move(batch));
    ++pushed_;
  }
  cv_.notify_all();
}

std::vector<Tensor> LatentPipeline::Drain()
{
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [this] { return done_.size() == pushed_; });
  std::vector<Tensor> out = std::move(done_);
  done_.clear();
  pushed_ = 0;
  return out;
}

void LatentPipeline::Run()
{
  for (;;)
  {
    Tensor frame;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stop_ || !pending_.empty(); });
      if (pending_.empty())
      {
        return;
      }
      frame = std::move(pending_.front());
      pending_.pop_front();
    }
    Tensor latent = net_.InferTap(frame).reshaped(net_.tap_shape());
    {
      std::lock_guard lock(mutex_);
      done_.push_back(std::move(latent));
    }
    cv_.notify_all();
  }
}

// ---------------------------------------------------------------- sparsification, drift

L1Penalty L1ActivationPenalty(Tensor const &acts, double alpha)
{
  Require(alpha >= 0.0 && std::isfinite(alpha), ErrorCode::kConfig, "L1 weight must be finite and >= 0");
  L1Penalty out;
  out.dacts = Tensor(acts.shape());
  if (alpha == 0.0)
  {
    return out;
  }
  double s = 0.0;
  for (std::size_t k = 0; k < acts.size(); ++k)
  {
    float const a = acts[k];
    s += std::abs(static_cast<double>(a));
    out.dacts[k] = a > 0.0f ? static_cast<float>(alpha) : (a < 0.0f ? static_cast<float>(-alpha) : 0.0f);
  }
  out.penalty = alpha * s;
  return out;
}

double FractionNonZero(Tensor const &acts)
{
  if (acts.size() == 0)
  {
    return 0.0;
  }
  std::size_t nz = 0;
  for (float a : acts.data())
  {
    nz += std::abs(a) > 0.0f ? 1 : 0;
  }
  return static_cast<double>(nz) / static_cast<double>(acts.size());
}

double AgingDrift(ReplayMemory const &rm, Network const &net)
{
  Require(rm.kind() == ReplayKind::kLatent, ErrorCode::kUnsupported, "aging drift is defined for latent memories only");
  if (rm.empty())
  {
    return 0.0;
  }
  Require(rm.has_sources(), ErrorCode::kUnsupported, "aging drift needs source patterns (debug mode)");
  Require(net.tap_name() == rm.tap(), ErrorCode::kConfig,
          "memory tap '" + rm.tap() + "' differs from network tap '" + net.tap_name() + "'");
  constexpr double kEps = 1e-12;
  double           sum  = 0.0;
  for (auto const &it : rm.items())
  {
    Tensor const now  = net.InferTap(it.source->reshaped(WithBatch(1, net.input_shape())));
    double       diff = 0.0;
    for (std::size_t k = 0; k < now.size(); ++k)
    {
      double const dlt = static_cast<double>(it.payload[k]) - now[k];
      diff += dlt * dlt;
    }
    sum += std::sqrt(diff) / (L2Norm(now.data()) + kEps);
  }
  return sum / static_cast<double>(rm.size());
}

}  // namespace lr

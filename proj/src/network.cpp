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

#include "latent_replay/network.hpp"

#include "latent_replay/error.hpp"
#include "latent_replay/tensor_io.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace lr {
namespace {

using nlohmann::json;

void RejectUnknownKeys(json const &obj, std::set<std::string> const &allowed, std::string const &where)
{
  for (auto it = obj.begin(); it != obj.end(); ++it)
  {
    Require(allowed.count(it.key()) > 0, ErrorCode::kConfig, where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
T Get(json const &obj, char const *key, T fallback)
{
  if (!obj.contains(key))
  {
    return fallback;
  }
  try
  {
    return obj.at(key).get<T>();
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string FileSafe(std::string name)
{
  for (auto &ch : name)
  {
    if (ch == '/' || ch == '\\')
    {
      ch = '_';
    }
  }
  return name;
}

}  // namespace

NetworkSpec ParseNetworkSpec(std::string const &json_text)
{
  json doc;
  try
  {
    doc = json::parse(json_text);
  }
  catch (json::exception const &e)
  {
    Fail(ErrorCode::kConfig, std::string("network spec is not valid JSON: ") + e.what());
  }
  Require(doc.is_object(), ErrorCode::kConfig, "network spec must be a JSON object");
  RejectUnknownKeys(doc, {"input", "classes", "tap", "head", "layers"}, "network spec");
  Require(doc.contains("input") && doc.contains("classes") && doc.contains("layers"), ErrorCode::kConfig,
          "network spec needs 'input', 'classes' and 'layers'");

  NetworkSpec spec;
  spec.input   = Get<Shape>(doc, "input", {});
  spec.classes = Get<std::size_t>(doc, "classes", 0);
  spec.tap     = Get<std::string>(doc, "tap", "input");
  spec.head    = Get<std::string>(doc, "head", "");
  Require(doc.at("layers").is_array(), ErrorCode::kConfig, "'layers' must be an array");
  for (auto const &l : doc.at("layers"))
  {
    Require(l.is_object(), ErrorCode::kConfig, "each layer must be an object");
    RejectUnknownKeys(l, {"name", "kind", "out", "kernel", "stride", "pad", "bias", "r_max", "d_max", "avg_rate", "eps"},
                      "layer");
    LayerSpec ls;
    ls.name   = Get<std::string>(l, "name", "");
    ls.kind   = ParseLayerKind(Get<std::string>(l, "kind", ""));
    ls.out    = Get<std::size_t>(l, "out", 0);
    ls.kernel = Get<std::size_t>(l, "kernel", 1);
    ls.stride = Get<std::size_t>(l, "stride", 1);
    ls.pad    = Get<std::size_t>(l, "pad", 0);
    ls.bias   = Get<bool>(l, "bias", true);
    ls.brn.r_max    = Get<float>(l, "r_max", ls.brn.r_max);
    ls.brn.d_max    = Get<float>(l, "d_max", ls.brn.d_max);
    ls.brn.avg_rate = Get<double>(l, "avg_rate", ls.brn.avg_rate);
    ls.brn.eps      = Get<double>(l, "eps", ls.brn.eps);
    spec.layers.push_back(std::move(ls));
  }
  if (spec.head.empty() && !spec.layers.empty())
  {
    spec.head = spec.layers.back().name;
  }
  return spec;
}

NetworkSpec LoadNetworkSpec(std::filesystem::path const &path)
{
  std::ifstream is(path);
  Require(static_cast<bool>(is), ErrorCode::kIo, "cannot open network spec " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ParseNetworkSpec(ss.str());
}

std::string NetworkSpecToJson(NetworkSpec const &spec)
{
  json doc;
  doc["input"]   = spec.input;
  doc["classes"] = spec.classes;
  doc["tap"]     = spec.tap;
  doc["head"]    = spec.head;
  doc["layers"]  = json::array();
  for (auto const &l : spec.layers)
  {
    json j;
    j["name"] = l.name;
    j["kind"] = ToString(l.kind);
    switch (l.kind)
    {
    case LayerKind::kDense:
      j["out"]  = l.out;
      j["bias"] = l.bias;
      break;
    case LayerKind::kConv:
    case LayerKind::kDwConv:
      if (l.kind == LayerKind::kConv)
      {
        j["out"] = l.out;
      }
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["pad"]    = l.pad;
      j["bias"]   = l.bias;
      break;
    case LayerKind::kBrn:
      j["r_max"]    = l.brn.r_max;
      j["d_max"]    = l.brn.d_max;
      j["avg_rate"] = l.brn.avg_rate;
      j["eps"]      = l.brn.eps;
      break;
    default:
      break;
    }
    doc["layers"].push_back(std::move(j));
  }
  return doc.dump(2);
}

// ---------------------------------------------------------------- construction

Network::Network(NetworkSpec spec, std::uint64_t init_seed)
  : spec_(std::move(spec))
{
  Build(init_seed);
}

Network::Network(Network const &other)
  : spec_(other.spec_)
  , shapes_(other.shapes_)
  , lr_mult_(other.lr_mult_)
  , tap_(other.tap_)
  , head_(other.head_)
  , frozen_below_tap_(other.frozen_below_tap_)
{
  layers_.reserve(other.layers_.size());
  for (auto const &l : other.layers_)
  {
    layers_.push_back(l->Clone());
  }
  caches_.resize(layers_.size());
}

Network &Network::operator=(Network const &other)
{
  if (this != &other)
  {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Network::Build(std::uint64_t init_seed)
{
  Require(!spec_.layers.empty(), ErrorCode::kConfig, "network has no layers");
  Require(!spec_.input.empty() && ShapeSize(spec_.input) > 0, ErrorCode::kConfig, "network input shape must be non-empty");
  Require(spec_.classes > 0, ErrorCode::kConfig, "network needs classes > 0");

  std::set<std::string> names;
  SeededRng             rng(init_seed);
  Shape                 row = spec_.input;
  for (auto const &ls : spec_.layers)
  {
    Require(!ls.name.empty(), ErrorCode::kConfig, "layer names must be non-empty");
    Require(ls.name != "input", ErrorCode::kConfig, "'input' is reserved for the input tap");
    Require(names.insert(ls.name).second, ErrorCode::kConfig, "duplicate layer name '" + ls.name + "'");
    auto layer = MakeLayer(ls, row);
    row        = layer->OutputRowShape(row);
    if (auto *dense = dynamic_cast<DenseLayer *>(layer.get()))
    {
      dense->Initialize(rng);
    }
    else if (auto *conv = dynamic_cast<ConvLayer *>(layer.get()))
    {
      conv->Initialize(rng);
    }
    shapes_.push_back(row);
    layers_.push_back(std::move(layer));
  }
  lr_mult_.assign(layers_.size(), 1.0);
  caches_.resize(layers_.size());

  head_ = index_of(spec_.head);
  Require(layers_[head_]->kind() == LayerKind::kDense, ErrorCode::kConfig, "head '" + spec_.head + "' must be a dense layer");
  Require(head_ == layers_.size() - 1, ErrorCode::kConfig, "head must be the final layer");
  Require(shapes_.back() == Shape{spec_.classes}, ErrorCode::kConfig,
          "head output width " + ShapeString(shapes_.back()) + " != class count " + std::to_string(spec_.classes));
  set_tap(spec_.tap.empty() ? "input" : spec_.tap);
}

std::size_t Network::index_of(std::string const &name) const
{
  for (std::size_t i = 0; i < layers_.size(); ++i)
  {
    if (layers_[i]->name() == name)
    {
      return i;
    }
  }
  Fail(ErrorCode::kLookup, "no layer named '" + name + "'");
}

bool Network::has_layer(std::string const &name) const
{
  for (auto const &l : layers_)
  {
    if (l->name() == name)
    {
      return true;
    }
  }
  return false;
}

Shape const &Network::output_shape(std::size_t i) const
{
  if (i == kInputTap)
  {
    return spec_.input;
  }
  return shapes_.at(i);
}

std::string Network::tap_name() const
{
  return tap_ == kInputTap ? std::string("input") : layers_[tap_]->name();
}

void Network::set_tap(std::string const &name)
{
  std::size_t idx = name == "input" ? kInputTap : index_of(name);
  Require(idx == kInputTap || idx < head_, ErrorCode::kConfig, "tap must sit below the head layer");
  tap_      = idx;
  spec_.tap = name;
  clear_cache();
}

DenseLayer &Network::head()
{
  return static_cast<DenseLayer &>(*layers_[head_]);
}

DenseLayer const &Network::head() const
{
  return static_cast<DenseLayer const &>(*layers_[head_]);
}

double Network::lr_mult(std::size_t i) const
{
  if (frozen_below_tap_ && tap_ != kInputTap && i <= tap_)
  {
    return 0.0;
  }
  return lr_mult_.at(i);
}

void Network::set_lr_mult(std::size_t i, double mult)
{
  Require(mult >= 0.0, ErrorCode::kConfig, "learning-rate multipliers must be >= 0");
  lr_mult_.at(i) = mult;
}

void Network::set_all_lr_mult(double mult)
{
  for (std::size_t i = 0; i < lr_mult_.size(); ++i)
  {
    set_lr_mult(i, mult);
  }
}

void Network::set_moments_frozen(std::size_t first, std::size_t last, bool frozen)
{
  for (std::size_t i = first; i <= last && i < layers_.size(); ++i)
  {
    if (auto *brn = dynamic_cast<BrnLayer *>(layers_[i].get()))
    {
      brn->moments_frozen = frozen;
    }
  }
}

void Network::set_moments_frozen_below_tap(bool frozen)
{
  if (tap_ != kInputTap)
  {
    set_moments_frozen(0, tap_, frozen);
  }
}

void Network::set_all_moments_frozen(bool frozen)
{
  set_moments_frozen(0, layers_.size() - 1, frozen);
}

void Network::clear_cache()
{
  cached_ = false;
  for (auto &c : caches_)
  {
    c = LayerCache{};
  }
}

// ---------------------------------------------------------------- forward

Tensor Network::RunTrain(Tensor x, std::size_t first, std::size_t last)
{
  for (std::size_t i = first; i <= last && i < layers_.size(); ++i)
  {
    x = layers_[i]->Train(x, caches_[i]);
  }
  return x;
}

Tensor Network::RunInfer(Tensor x, std::size_t first, std::size_t last) const
{
  for (std::size_t i = first; i <= last && i < layers_.size(); ++i)
  {
    x = layers_[i]->Infer(x);
  }
  return x;
}

ForwardResult Network::Forward(Tensor const &x, Mode mode)
{
  return ForwardConcat(x, Tensor{}, mode);
}

Tensor Network::ForwardFrom(Tensor const &latent, Mode mode)
{
  return ForwardConcat(Tensor{}, latent, mode).logits;
}

ForwardResult Network::ForwardConcat(Tensor const &x_native, Tensor const &latent_replay, Mode mode)
{
  std::size_t const n_native = x_native.rank() ? x_native.dim(0) : 0;
  std::size_t const n_replay = latent_replay.rank() ? latent_replay.dim(0) : 0;
  Require(n_native + n_replay > 0, ErrorCode::kEmptyBatch, "forward on an empty batch");
  if (x_native.rank())
  {
    Require(RowShape(x_native.shape()) == spec_.input, ErrorCode::kShape,
            "input rows " + ShapeString(RowShape(x_native.shape())) + " do not match network input " +
                ShapeString(spec_.input));
  }
  if (latent_replay.rank())
  {
    Require(RowShape(latent_replay.shape()) == tap_shape(), ErrorCode::kShape,
            "latent rows " + ShapeString(RowShape(latent_replay.shape())) + " do not match tap '" + tap_name() +
                "' shape " + ShapeString(tap_shape()));
  }

  ForwardResult out;
  if (mode == Mode::kEval)
  {
    if (n_native > 0)
    {
      out.tapped = tap_ == kInputTap ? x_native : RunInfer(x_native, 0, tap_);
    }
    Tensor joint = ConcatRows(out.tapped, latent_replay);
    out.logits   = RunInfer(std::move(joint), first_above_tap(), layers_.size() - 1);
    return out;
  }

  clear_cache();
  if (n_native > 0)
  {
    out.tapped = tap_ == kInputTap ? x_native : RunTrain(x_native, 0, tap_);
  }
  Tensor joint = ConcatRows(out.tapped, latent_replay);
  out.logits   = RunTrain(std::move(joint), first_above_tap(), layers_.size() - 1);

  cached_              = true;
  cached_native_       = n_native;
  cached_total_        = n_native + n_replay;
  cached_logits_shape_ = out.logits.shape();
  return out;
}

Tensor Network::Infer(Tensor const &x) const
{
  Require(x.rank() && RowShape(x.shape()) == spec_.input, ErrorCode::kShape, "input rows do not match network input");
  return RunInfer(x, 0, layers_.size() - 1);
}

Tensor Network::InferTap(Tensor const &x) const
{
  Require(x.rank() && RowShape(x.shape()) == spec_.input, ErrorCode::kShape, "input rows do not match network input");
  return tap_ == kInputTap ? x : RunInfer(x, 0, tap_);
}

Tensor Network::InferFrom(Tensor const &latent) const
{
  Require(latent.rank() && RowShape(latent.shape()) == tap_shape(), ErrorCode::kShape, "latent rows do not match tap shape");
  return RunInfer(latent, first_above_tap(), layers_.size() - 1);
}

// ---------------------------------------------------------------- backward

Gradients Network::Backward(Tensor const &dlogits, std::size_t n_native, Tensor const *tap_grad_extra)
{
  Require(cached_, ErrorCode::kState, "backward called without a preceding train-mode forward");
  Require(dlogits.shape() == cached_logits_shape_, ErrorCode::kShape,
          "dlogits shape " + ShapeString(dlogits.shape()) + " does not match last forward " +
              ShapeString(cached_logits_shape_));
  Require(n_native == cached_native_, ErrorCode::kState,
          "n_native " + std::to_string(n_native) + " differs from the last forward's " + std::to_string(cached_native_));

  Gradients grads;
  grads.layers.resize(layers_.size());

  std::size_t const first_above = first_above_tap();
  Tensor            g           = dlogits;
  bool const        need_below  = n_native > 0 && tap_ != kInputTap && !frozen_below_tap_;
  for (std::size_t i = layers_.size(); i-- > first_above;)
  {
    bool const need_dx = i > first_above || need_below || tap_grad_extra != nullptr;
    g                  = layers_[i]->Backward(g, caches_[i], grads.layers[i], need_dx);
  }
  if (!need_below)
  {
    return grads;
  }

  // Stop the replay rows here; only the native rows continue downwards.
  Tensor g_native = first_above == 0 ? Tensor{} : g.rows(0, n_native);
  if (tap_grad_extra != nullptr)
  {
    Require(tap_grad_extra->shape() == g_native.shape(), ErrorCode::kShape, "extra tap gradient shape mismatch");
    for (std::size_t k = 0; k < g_native.size(); ++k)
    {
      g_native[k] += (*tap_grad_extra)[k];
    }
  }
  for (std::size_t i = tap_ + 1; i-- > 0;)
  {
    g_native = layers_[i]->Backward(g_native, caches_[i], grads.layers[i], i > 0);
  }
  return grads;
}

void Network::SgdStep(Gradients const &grads, double base_lr)
{
  Require(grads.layers.size() == layers_.size(), ErrorCode::kShape, "gradients do not belong to this network");
  for (std::size_t i = 0; i < layers_.size(); ++i)
  {
    double const mult = lr_mult(i);
    if (mult == 0.0 || !grads.has(i))
    {
      continue;
    }
    auto params = layers_[i]->Params();
    Require(params.size() == grads.layers[i].size(), ErrorCode::kShape, "gradient count mismatch at layer " + layers_[i]->name());
    double const step = base_lr * mult;
    for (std::size_t p = 0; p < params.size(); ++p)
    {
      Tensor       &theta = *params[p];
      Tensor const &g     = grads.layers[i][p];
      Require(theta.shape() == g.shape(), ErrorCode::kShape, "gradient shape mismatch at layer " + layers_[i]->name());
      for (std::size_t k = 0; k < theta.size(); ++k)
      {
        theta[k] = static_cast<float>(theta[k] - step * g[k]);
      }
    }
  }
}

std::vector<Tensor *> Network::parameters(std::size_t first, std::size_t last)
{
  std::vector<Tensor *> out;
  for (std::size_t i = first; i < layers_.size() && (last == kInputTap || i <= last); ++i)
  {
    for (auto *p : layers_[i]->Params())
    {
      out.push_back(p);
    }
  }
  return out;
}

std::vector<Tensor const *> Network::parameters(std::size_t first, std::size_t last) const
{
  std::vector<Tensor const *> out;
  for (std::size_t i = first; i < layers_.size() && (last == kInputTap || i <= last); ++i)
  {
    for (auto const *p : std::as_const(*layers_[i]).Params())
    {
      out.push_back(p);
    }
  }
  return out;
}

// ---------------------------------------------------------------- checkpoints

void Network::SaveCheckpoint(std::filesystem::path const &dir) const
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  Require(!ec, ErrorCode::kIo, "cannot create checkpoint directory " + dir.string());
  std::ofstream(dir / "network.json") << NetworkSpecToJson(spec_) << '\n';
  for (auto const &l : layers_)
  {
    auto const  names  = l->ParamNames();
    auto const  params = std::as_const(*l).Params();
    std::string stem   = FileSafe(l->name());
    for (std::size_t p = 0; p < params.size(); ++p)
    {
      SaveTensor(dir / (stem + "." + names[p] + ".lrt"), *params[p]);
    }
    if (auto const *brn = dynamic_cast<BrnLayer const *>(l.get()))
    {
      SaveTensor(dir / (stem + ".mu_mov.lrt"), brn->mu_mov);
      SaveTensor(dir / (stem + ".sigma_mov.lrt"), brn->sigma_mov);
    }
  }
}

void Network::LoadCheckpoint(std::filesystem::path const &dir)
{
  for (auto &l : layers_)
  {
    auto const  names  = l->ParamNames();
    auto        params = l->Params();
    std::string stem   = FileSafe(l->name());
    for (std::size_t p = 0; p < params.size(); ++p)
    {
      Tensor t = LoadTensor(dir / (stem + "." + names[p] + ".lrt"));
      Require(t.shape() == params[p]->shape(), ErrorCode::kShape,
              "checkpoint tensor " + stem + "." + names[p] + " has shape " + ShapeString(t.shape()));
      *params[p] = std::move(t);
    }
    if (auto *brn = dynamic_cast<BrnLayer *>(l.get()))
    {
      Tensor mu    = LoadTensor(dir / (stem + ".mu_mov.lrt"));
      Tensor sigma = LoadTensor(dir / (stem + ".sigma_mov.lrt"));
      brn->SetMovingMoments(mu.values(), sigma.values());
    }
  }
  clear_cache();
}

}  // namespace lr

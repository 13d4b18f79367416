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

#include "latent_replay/trainer.hpp"

#include "latent_replay/error.hpp"
#include "latent_replay/kernels.hpp"

#include <algorithm>
#include <chrono>
#include <utility>

namespace lr {

namespace {

struct StrategyName
{
  StrategyKind kind;
  char const  *name;
};

constexpr StrategyName kStrategyNames[] = {
    {StrategyKind::kNaive, "naive"},
    {StrategyKind::kCwrStar, "cwr*"},
    {StrategyKind::kAr1Star, "ar1*"},
    {StrategyKind::kAr1StarFree, "ar1*free"},
    {StrategyKind::kDslda, "dslda"},
};

bool IsHeadManaged(StrategyKind kind)
{
  return kind == StrategyKind::kCwrStar || kind == StrategyKind::kAr1Star || kind == StrategyKind::kAr1StarFree;
}

/// Tap used by a config: the explicit one, or the layer feeding the head for
/// strategies that need a tap by construction.
std::string ResolveTap(StrategyConfig const &cfg, Network const &net)
{
  std::string const under_head = net.layer(net.head_index() - 1).name();
  if (cfg.kind == StrategyKind::kCwrStar || cfg.kind == StrategyKind::kDslda)
  {
    return under_head;
  }
  if (!cfg.tap.empty())
  {
    return cfg.tap;
  }
  if (cfg.replay == ReplayKind::kLatent)
  {
    return under_head;
  }
  return "input";
}

std::vector<std::pair<std::size_t, std::size_t>> SiSlots(Network const &net)
{
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < net.head_index(); ++i)
  {
    for (std::size_t p = 0; p < net.layer(i).Params().size(); ++p)
    {
      out.emplace_back(i, p);
    }
  }
  return out;
}

}  // namespace

char const *ToString(StrategyKind kind)
{
  for (auto const &entry : kStrategyNames)
  {
    if (entry.kind == kind)
    {
      return entry.name;
    }
  }
  return "unknown";
}

StrategyKind ParseStrategyKind(std::string const &name)
{
  for (auto const &entry : kStrategyNames)
  {
    if (name == entry.name)
    {
      return entry.kind;
    }
  }
  Fail(ErrorCode::kConfig, "unknown strategy '" + name + "' (expected naive, cwr*, ar1*, ar1*free or dslda)");
}

std::vector<Tensor *> SiParameters(Network &net)
{
  return net.head_index() == 0 ? std::vector<Tensor *>{} : net.parameters(0, net.head_index() - 1);
}

std::vector<Tensor const *> SiParameters(Network const &net)
{
  return net.head_index() == 0 ? std::vector<Tensor const *>{} : net.parameters(0, net.head_index() - 1);
}

void ValidateStrategy(StrategyConfig const &cfg, Network const &net)
{
  Require(net.head_index() > 0, ErrorCode::kConfig, "network needs at least one layer under the head");
  Require(cfg.epochs_first >= 1 && cfg.epochs >= 1, ErrorCode::kConfig, "epochs must be at least 1");
  Require(cfg.mb >= 1, ErrorCode::kConfig, "mini-batch size must be at least 1");
  Require(cfg.lr_first >= 0.0 && cfg.lr_head >= 0.0 && cfg.lr_other >= 0.0, ErrorCode::kConfig,
          "learning rates must be non-negative");
  Require(cfg.sparsifier.alpha >= 0.0, ErrorCode::kConfig, "sparsifier alpha must be non-negative");
  Require(cfg.rm_size == 0 || cfg.replay.has_value(), ErrorCode::kConfig, "rm_size set without a replay kind");

  if (cfg.kind == StrategyKind::kDslda)
  {
    Require(!cfg.replay.has_value(), ErrorCode::kConfig, "dslda does not use a replay memory");
    Require(cfg.dslda_shrinkage >= 0.0 && cfg.dslda_shrinkage <= 1.0, ErrorCode::kConfig,
            "dslda shrinkage must lie in [0, 1]");
  }
  std::string const under_head = net.layer(net.head_index() - 1).name();
  if ((cfg.kind == StrategyKind::kCwrStar || cfg.kind == StrategyKind::kDslda) && !cfg.tap.empty())
  {
    Require(cfg.tap == under_head, ErrorCode::kConfig,
            std::string(ToString(cfg.kind)) + " works on the layer under the head ('" + under_head +
                "'), not '" + cfg.tap + "'");
  }

  std::string const tap = ResolveTap(cfg, net);
  Require(tap == "input" || net.has_layer(tap), ErrorCode::kConfig, "unknown tap layer '" + tap + "'");
  if (tap != "input")
  {
    Require(net.index_of(tap) < net.head_index(), ErrorCode::kConfig, "tap '" + tap + "' must sit below the head");
  }
  if (cfg.replay == ReplayKind::kLatent)
  {
    Require(tap != "input", ErrorCode::kConfig, "latent replay needs a tap layer; use native replay for inputs");
  }
  if (cfg.sparsifier.alpha > 0.0)
  {
    Require(tap != "input", ErrorCode::kConfig, "the activation sparsifier needs a tap layer");
  }
  if (cfg.track_drift)
  {
    Require(cfg.replay == ReplayKind::kLatent, ErrorCode::kConfig, "drift tracking needs latent replay");
  }
}

Learner::Learner(StrategyConfig cfg, Network net, std::uint64_t seed)
  : cfg_(std::move(cfg))
  , net_(std::move(net))
  , rng_(seed)
  , memory_(cfg_.replay.value_or(ReplayKind::kNative), cfg_.rm_size, rng_.NextU64(), ResolveTap(cfg_, net_))
{
  ValidateStrategy(cfg_, net_);
  if (cfg_.name.empty())
  {
    cfg_.name = ToString(cfg_.kind);
  }
  net_.set_tap(ResolveTap(cfg_, net_));
  net_.set_frozen_below_tap(false);
  net_.set_all_lr_mult(1.0);
  if (cfg_.freeze_all_moments)
  {
    net_.set_all_moments_frozen(true);
  }
  if (IsHeadManaged(cfg_.kind))
  {
    DenseLayer const &head = net_.head();
    cwr_.emplace(head.weight.dim(0), head.weight.dim(1));
  }
  if (cfg_.kind == StrategyKind::kAr1Star)
  {
    std::vector<Tensor const *> params = SiParameters(std::as_const(net_));
    si_.emplace(cfg_.si, params);
  }
  if (cfg_.kind == StrategyKind::kDslda)
  {
    dslda_.emplace(ShapeSize(net_.tap_shape()), net_.classes(), cfg_.dslda_shrinkage);
  }
}

bool Learner::head_managed() const noexcept
{
  return IsHeadManaged(cfg_.kind);
}

bool Learner::si_active() const noexcept
{
  return si_.has_value();
}

BatchReport Learner::TrainBatch(Tensor const &x, std::span<int const> labels)
{
  auto const start = std::chrono::steady_clock::now();
  Require(x.rank() >= 1 && x.dim(0) == labels.size(), ErrorCode::kShape, "patterns and labels disagree");
  Require(!labels.empty(), ErrorCode::kEmptyBatch, "training batch is empty");
  for (int label : labels)
  {
    Require(label >= 0 && static_cast<std::size_t>(label) < net_.classes(), ErrorCode::kIndex,
            "label " + std::to_string(label) + " outside the classifier");
  }

  bool const first = batches_ == 0;
  ++batches_;
  BatchReport report;
  report.batch_index = batches_;

  // Learning-rate schedule and freezing for this batch.
  net_.set_all_lr_mult(1.0);
  double base_lr = cfg_.lr_first;
  if (!first)
  {
    base_lr = cfg_.lr_head;
    double const other = cfg_.lr_head > 0.0 ? cfg_.lr_other / cfg_.lr_head : 0.0;
    for (std::size_t i = 0; i < net_.head_index(); ++i)
    {
      net_.set_lr_mult(i, cfg_.kind == StrategyKind::kCwrStar ? 0.0 : other);
    }
    if (cfg_.replay == ReplayKind::kLatent || cfg_.kind == StrategyKind::kCwrStar)
    {
      net_.set_frozen_below_tap(true);
      if (cfg_.freeze_moments_below_tap)
      {
        net_.set_moments_frozen_below_tap(true);
      }
    }
  }

  bool const stream_only = dslda_.has_value() && !first;
  if (!stream_only)
  {
    std::vector<int> classes;
    if (head_managed())
    {
      std::vector<int> seen(labels.begin(), labels.end());
      std::vector<int> stored = memory_.AllLabels();
      seen.insert(seen.end(), stored.begin(), stored.end());
      classes = ClassSet(seen);
      CwrPreinit(*cwr_, classes, net_.head());
    }

    std::size_t const batch_size = labels.size();
    MiniBatchPlan     plan       = ComposeMiniBatch(batch_size, memory_.size(), cfg_.mb);
    if (memory_.empty())
    {
      plan.n_native = std::min(cfg_.mb, batch_size);
    }
    else if (plan.n_native == 0)
    {
      plan.n_native = 1;
      plan.n_replay = cfg_.mb > 1 ? cfg_.mb - 1 : 0;
    }
    report.n_native = plan.n_native;
    report.n_replay = plan.n_replay;

    std::size_t const iterations =
        cfg_.iterations > 0 ? cfg_.iterations : (batch_size + plan.n_native - 1) / plan.n_native;
    int const  epochs     = first ? cfg_.epochs_first : cfg_.epochs;
    bool const sparsify   = cfg_.sparsifier.alpha > 0.0 && (first || !cfg_.sparsifier.first_batch_only);
    bool const latent     = cfg_.replay == ReplayKind::kLatent;
    auto const si_slots   = SiSlots(net_);
    bool const use_si     = si_active();

    std::vector<std::size_t> native_idx(plan.n_native);
    for (int e = 0; e < epochs; ++e)
    {
      std::vector<std::size_t> order  = rng_.Permutation(batch_size);
      std::size_t              cursor = 0;
      for (std::size_t it = 0; it < iterations; ++it)
      {
        for (std::size_t k = 0; k < plan.n_native; ++k)
        {
          native_idx[k] = order[(cursor + k) % batch_size];
        }
        cursor += plan.n_native;
        Tensor const     x_native = x.gather_rows(native_idx);
        std::vector<int> targets;
        targets.reserve(plan.n_native + plan.n_replay);
        for (std::size_t i : native_idx)
        {
          targets.push_back(labels[i]);
        }

        ForwardResult fwd;
        std::size_t   n_native_rows = plan.n_native;
        if (plan.n_replay > 0 && !memory_.empty())
        {
          ReplayDraw const draw = DrawReplayIndices(memory_.size(), plan.n_replay, rng_);
          report.replay_with_replacement |= draw.with_replacement;
          Tensor const           stored = memory_.Payloads(draw.indices);
          std::vector<int> const ys     = memory_.Labels(draw.indices);
          targets.insert(targets.end(), ys.begin(), ys.end());
          if (latent)
          {
            fwd = net_.ForwardConcat(x_native, stored, Mode::kTrain);
          }
          else
          {
            fwd           = net_.Forward(ConcatRows(x_native, stored), Mode::kTrain);
            n_native_rows = targets.size();
          }
        }
        else
        {
          fwd = net_.Forward(x_native, Mode::kTrain);
        }

        SoftmaxXent xent = SoftmaxCrossEntropy(fwd.logits, targets);
        double      loss = xent.loss;

        std::optional<L1Penalty> l1;
        if (sparsify)
        {
          l1 = L1ActivationPenalty(fwd.tapped, cfg_.sparsifier.alpha / static_cast<double>(plan.n_native));
          loss += l1->penalty;
        }

        Gradients grads = net_.Backward(xent.dlogits, n_native_rows, l1 ? &l1->dacts : nullptr);
        if (head_managed())
        {
          CwrMaskGradient(classes, grads.layers[net_.head_index()]);
        }

        std::vector<Tensor> task_grads;
        std::vector<Tensor> before;
        if (use_si)
        {
          for (auto [layer, p] : si_slots)
          {
            Tensor const &theta = *net_.layer(layer).Params()[p];
            task_grads.push_back(grads.has(layer) ? grads.layers[layer][p] : Tensor(theta.shape()));
            before.push_back(theta);
          }
          if (!first)
          {
            std::vector<Tensor const *> theta   = SiParameters(std::as_const(net_));
            SiPenaltyResult             penalty = SiPenalty(theta, *si_);
            loss += penalty.loss;
            for (std::size_t s = 0; s < si_slots.size(); ++s)
            {
              auto [layer, p] = si_slots[s];
              if (!grads.has(layer))
              {
                continue;
              }
              Tensor &g = grads.layers[layer][p];
              for (std::size_t k = 0; k < g.size(); ++k)
              {
                g[k] += penalty.dtheta[s][k];
              }
            }
          }
        }

        net_.SgdStep(grads, base_lr);

        if (use_si)
        {
          for (std::size_t s = 0; s < si_slots.size(); ++s)
          {
            auto [layer, p]     = si_slots[s];
            Tensor const &theta = *net_.layer(layer).Params()[p];
            Tensor       &delta = before[s];
            for (std::size_t k = 0; k < delta.size(); ++k)
            {
              delta[k] = theta[k] - delta[k];
            }
          }
          SiAccumulate(*si_, task_grads, before);
        }

        report.losses.push_back(loss);
        ++report.minibatches;
      }
    }
    net_.clear_cache();

    if (use_si)
    {
      std::vector<Tensor const *> theta = SiParameters(std::as_const(net_));
      SiConsolidate(*si_, theta, first);
    }
    if (head_managed())
    {
      std::vector<std::size_t> cur(net_.classes(), 0);
      for (int label : labels)
      {
        ++cur[static_cast<std::size_t>(label)];
      }
      for (int label : memory_.AllLabels())
      {
        ++cur[static_cast<std::size_t>(label)];
      }
      CwrConsolidate(*cwr_, classes, cur, net_.head());
      CwrLoadConsolidated(*cwr_, net_.head());
    }
  }

  if (dslda_)
  {
    dslda_->Update(net_.InferTap(x), labels);
  }

  if (cfg_.replay.has_value())
  {
    if (cfg_.track_drift && !memory_.empty())
    {
      report.drift = AgingDrift(memory_, net_);
    }
    if (cfg_.replay == ReplayKind::kLatent)
    {
      Tensor const latents = net_.InferTap(x);
      report.memory        = memory_.Update(latents, labels, batches_, cfg_.track_drift ? &x : nullptr);
    }
    else
    {
      report.memory = memory_.Update(x, labels, batches_);
    }
  }
  report.rm_items = memory_.size();
  report.train_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<int> Learner::Predict(Tensor const &x) const
{
  if (dslda_)
  {
    return dslda_->Predict(net_.InferTap(x));
  }
  return ArgMaxRows(net_.Infer(x));
}

double Learner::Accuracy(Tensor const &x, std::span<int const> labels) const
{
  Require(x.rank() >= 1 && x.dim(0) == labels.size(), ErrorCode::kShape, "patterns and labels disagree");
  if (labels.empty())
  {
    return 0.0;
  }
  std::size_t const      n    = labels.size();
  std::size_t            hits = 0;
  std::size_t constexpr  kChunk = 256;
  for (std::size_t begin = 0; begin < n; begin += kChunk)
  {
    std::size_t const      count = std::min(kChunk, n - begin);
    std::vector<int> const pred  = Predict(x.rows(begin, count));
    for (std::size_t i = 0; i < count; ++i)
    {
      hits += pred[i] == labels[begin + i] ? 1 : 0;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace lr

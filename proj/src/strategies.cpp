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

#include "latent_replay/strategies.hpp"

#include "latent_replay/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lr {

namespace {

void CheckClasses(std::span<int const> classes, std::size_t count)
{
  Require(!classes.empty(), ErrorCode::kEmptyBatch, "empty class set");
  for (int c : classes)
  {
    Require(c >= 0 && static_cast<std::size_t>(c) < count, ErrorCode::kIndex,
            "class " + std::to_string(c) + " outside the head");
  }
}

void CheckHead(CwrHead const &head, DenseLayer const &live)
{
  Require(live.weight.shape() == head.cw_weight.shape(), ErrorCode::kShape,
          "head is " + ShapeString(live.weight.shape()) + ", consolidated copy is " +
              ShapeString(head.cw_weight.shape()));
  Require(live.bias.size() == head.cw_bias.size(), ErrorCode::kShape, "head bias size mismatch");
}

}  // namespace

CwrHead::CwrHead(std::size_t classes, std::size_t in_features)
  : cw_weight({classes, in_features})
  , cw_bias({classes})
  , past(classes, 0.0)
{}

std::vector<int> ClassSet(std::span<int const> labels)
{
  std::vector<int> out(labels.begin(), labels.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void CwrPreinit(CwrHead const &head, std::span<int const> classes, DenseLayer &live)
{
  CheckHead(head, live);
  CheckClasses(classes, head.classes());
  live.weight.fill(0.0f);
  live.bias.fill(0.0f);
  for (int c : classes)
  {
    auto j   = static_cast<std::size_t>(c);
    auto src = head.cw_weight.row(j);
    std::copy(src.begin(), src.end(), live.weight.row(j).begin());
    live.bias[j] = head.cw_bias[j];
  }
}

void CwrMaskGradient(std::span<int const> classes, std::vector<Tensor> &head_grads)
{
  Require(head_grads.size() == 2, ErrorCode::kShape, "expected head weight and bias gradients");
  Tensor &gw = head_grads[0];
  Tensor &gb = head_grads[1];
  std::vector<bool> keep(gb.size(), false);
  for (int c : classes)
  {
    if (c >= 0 && static_cast<std::size_t>(c) < keep.size())
    {
      keep[static_cast<std::size_t>(c)] = true;
    }
  }
  for (std::size_t j = 0; j < keep.size(); ++j)
  {
    if (!keep[j])
    {
      auto row = gw.row(j);
      std::fill(row.begin(), row.end(), 0.0f);
      gb[j] = 0.0f;
    }
  }
}

void CwrConsolidate(CwrHead &head, std::span<int const> classes, std::span<std::size_t const> cur,
                    DenseLayer const &live)
{
  CheckHead(head, live);
  CheckClasses(classes, head.classes());
  Require(cur.size() == head.classes(), ErrorCode::kShape, "need one pattern count per class");

  std::size_t const in = head.cw_weight.row_size();
  double            weight_sum{0.0};
  double            bias_sum{0.0};
  for (int c : classes)
  {
    auto const j = static_cast<std::size_t>(c);
    Require(cur[j] > 0, ErrorCode::kState, "class " + std::to_string(c) + " has no patterns in the batch");
    for (float w : live.weight.row(j))
    {
      weight_sum += w;
    }
    bias_sum += live.bias[j];
  }
  double const mean_w = weight_sum / static_cast<double>(classes.size() * in);
  double const mean_b = bias_sum / static_cast<double>(classes.size());

  for (int c : classes)
  {
    auto const   j     = static_cast<std::size_t>(c);
    double const wpast = std::sqrt(head.past[j] / static_cast<double>(cur[j]));
    auto         cw    = head.cw_weight.row(j);
    auto         tw    = live.weight.row(j);
    for (std::size_t k = 0; k < in; ++k)
    {
      cw[k] = static_cast<float>((cw[k] * wpast + (tw[k] - mean_w)) / (wpast + 1.0));
    }
    head.cw_bias[j] = static_cast<float>((head.cw_bias[j] * wpast + (live.bias[j] - mean_b)) / (wpast + 1.0));
    head.past[j] += static_cast<double>(cur[j]);
  }
}

void CwrLoadConsolidated(CwrHead const &head, DenseLayer &live)
{
  CheckHead(head, live);
  live.weight = head.cw_weight;
  live.bias   = head.cw_bias;
}

SiState::SiState(SiConfig cfg, std::span<Tensor const *const> params)
  : config(cfg)
{
  Require(cfg.xi > 0.0, ErrorCode::kConfig, "SI damping must be positive");
  Require(cfg.max_f >= 0.0, ErrorCode::kConfig, "SI importance cap must be non-negative");
  for (Tensor const *p : params)
  {
    theta_ref.push_back(*p);
    traj.emplace_back(p->shape());
    importance.emplace_back(p->shape());
  }
}

void SiAccumulate(SiState &state, std::span<Tensor const> grads, std::span<Tensor const> delta_theta)
{
  Require(grads.size() == state.traj.size() && delta_theta.size() == state.traj.size(), ErrorCode::kShape,
          "SI expects one gradient and one step per tracked tensor");
  for (std::size_t p = 0; p < state.traj.size(); ++p)
  {
    Tensor &w = state.traj[p];
    Require(grads[p].shape() == w.shape() && delta_theta[p].shape() == w.shape(), ErrorCode::kShape,
            "SI tensor " + std::to_string(p) + " shape mismatch");
    for (std::size_t k = 0; k < w.size(); ++k)
    {
      w[k] = static_cast<float>(w[k] - static_cast<double>(grads[p][k]) * delta_theta[p][k]);
    }
  }
}

void SiConsolidate(SiState &state, std::span<Tensor const *const> theta_now, bool first_batch)
{
  Require(theta_now.size() == state.theta_ref.size(), ErrorCode::kShape, "SI parameter count mismatch");
  double const w = first_batch ? state.config.w1 : state.config.wi;
  for (std::size_t p = 0; p < theta_now.size(); ++p)
  {
    Tensor const &theta = *theta_now[p];
    Tensor       &ref   = state.theta_ref[p];
    Tensor       &f     = state.importance[p];
    Tensor       &omega = state.traj[p];
    Require(theta.shape() == ref.shape(), ErrorCode::kShape, "SI tensor " + std::to_string(p) + " shape mismatch");
    for (std::size_t k = 0; k < theta.size(); ++k)
    {
      double const step = static_cast<double>(theta[k]) - ref[k];
      double const gain = w * std::max(static_cast<double>(omega[k]), 0.0) / (step * step + state.config.xi);
      f[k]              = static_cast<float>(std::clamp(f[k] + gain, 0.0, state.config.max_f));
    }
    ref = theta;
    omega.fill(0.0f);
  }
}

SiPenaltyResult SiPenalty(std::span<Tensor const *const> theta, SiState const &state)
{
  Require(theta.size() == state.theta_ref.size(), ErrorCode::kShape, "SI parameter count mismatch");
  SiPenaltyResult out;
  double const    lambda = state.config.lambda;
  for (std::size_t p = 0; p < theta.size(); ++p)
  {
    Tensor const &t   = *theta[p];
    Tensor const &ref = state.theta_ref[p];
    Tensor const &f   = state.importance[p];
    Require(t.shape() == ref.shape(), ErrorCode::kShape, "SI tensor " + std::to_string(p) + " shape mismatch");
    Tensor g(t.shape());
    for (std::size_t k = 0; k < t.size(); ++k)
    {
      double const diff = static_cast<double>(t[k]) - ref[k];
      out.loss += lambda * f[k] * diff * diff;
      g[k] = static_cast<float>(2.0 * lambda * f[k] * diff);
    }
    out.dtheta.push_back(std::move(g));
  }
  return out;
}

Dslda::Dslda(std::size_t dim, std::size_t classes, double shrinkage)
  : dim_(dim)
  , shrinkage_(shrinkage)
  , means_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dim)))
  , counts_(classes, 0)
  , scatter_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)))
{
  Require(dim > 0 && classes > 0, ErrorCode::kConfig, "DSLDA needs a positive dimension and class count");
  Require(shrinkage >= 0.0 && shrinkage <= 1.0, ErrorCode::kConfig, "DSLDA shrinkage must lie in [0, 1]");
}

std::size_t Dslda::count(int label) const
{
  Require(label >= 0 && static_cast<std::size_t>(label) < counts_.size(), ErrorCode::kIndex,
          "label " + std::to_string(label) + " out of range");
  return counts_[static_cast<std::size_t>(label)];
}

void Dslda::Update(std::span<float const> feature, int label)
{
  Require(feature.size() == dim_, ErrorCode::kShape,
          "feature has " + std::to_string(feature.size()) + " entries, expected " + std::to_string(dim_));
  auto const      c = static_cast<Eigen::Index>(count(label));
  auto const      j = static_cast<Eigen::Index>(label);
  Eigen::VectorXd x(static_cast<Eigen::Index>(dim_));
  for (std::size_t k = 0; k < dim_; ++k)
  {
    x[static_cast<Eigen::Index>(k)] = feature[k];
  }
  Eigen::VectorXd const diff = x - means_.row(j).transpose();
  double const          n    = static_cast<double>(c);
  scatter_ += (n / (n + 1.0)) * diff * diff.transpose();
  means_.row(j) += (diff / (n + 1.0)).transpose();
  ++counts_[static_cast<std::size_t>(label)];
  ++total_;
  stale_ = true;
}

void Dslda::Update(Tensor const &features, std::span<int const> labels)
{
  Require(features.rank() >= 1 && features.dim(0) == labels.size(), ErrorCode::kShape,
          "feature rows and labels disagree");
  for (std::size_t i = 0; i < labels.size(); ++i)
  {
    Update(features.row(i), labels[i]);
  }
}

Eigen::VectorXd Dslda::mean(int label) const
{
  count(label);
  return means_.row(static_cast<Eigen::Index>(label)).transpose();
}

Eigen::MatrixXd Dslda::covariance() const
{
  if (total_ == 0)
  {
    return scatter_;
  }
  return scatter_ / static_cast<double>(total_);
}

void Dslda::Refresh() const
{
  auto const      d = static_cast<Eigen::Index>(dim_);
  Eigen::MatrixXd target =
      (1.0 - shrinkage_) * covariance() + shrinkage_ * Eigen::MatrixXd::Identity(d, d);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(target);
  Require(lu.isInvertible(), ErrorCode::kNumeric, "DSLDA covariance is singular");
  Eigen::MatrixXd const precision = lu.inverse();
  Require(precision.allFinite(), ErrorCode::kNumeric, "DSLDA precision is not finite");
  weights_ = means_ * precision;  // precision is symmetric, so rows are (Lambda mu_c)^T
  offsets_ = -0.5 * (weights_.cwiseProduct(means_)).rowwise().sum();
  stale_   = false;
}

int Dslda::Predict(std::span<float const> feature) const
{
  Require(feature.size() == dim_, ErrorCode::kShape, "feature dimension mismatch");
  Require(total_ > 0, ErrorCode::kState, "DSLDA has not observed any class");
  if (stale_)
  {
    Refresh();
  }
  Eigen::VectorXd x(static_cast<Eigen::Index>(dim_));
  for (std::size_t k = 0; k < dim_; ++k)
  {
    x[static_cast<Eigen::Index>(k)] = feature[k];
  }
  int    best       = -1;
  double best_score = 0.0;
  for (std::size_t c = 0; c < counts_.size(); ++c)
  {
    if (counts_[c] == 0)
    {
      continue;
    }
    auto const   j     = static_cast<Eigen::Index>(c);
    double const score = weights_.row(j).dot(x) + offsets_[j];
    if (best < 0 || score > best_score)
    {
      best       = static_cast<int>(c);
      best_score = score;
    }
  }
  return best;
}

std::vector<int> Dslda::Predict(Tensor const &features) const
{
  Require(features.rank() >= 1, ErrorCode::kShape, "features must be batched");
  std::vector<int> out;
  out.reserve(features.dim(0));
  for (std::size_t i = 0; i < features.dim(0); ++i)
  {
    out.push_back(Predict(features.row(i)));
  }
  return out;
}

}  // namespace lr

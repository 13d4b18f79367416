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

#include "latent_replay/layers.hpp"
#include "latent_replay/tensor.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace lr {

/// Double memory for the classifier head: cw is the consolidated copy used at
/// inference, the live head layer holds the temporary weights tw trained on
/// the current batch.
struct CwrHead
{
  CwrHead(std::size_t classes, std::size_t in_features);

  std::size_t classes() const noexcept
  {
    return past.size();
  }

  Tensor              cw_weight;  // [classes, in]
  Tensor              cw_bias;    // [classes]
  std::vector<double> past;       // patterns consolidated so far, per class
};

/// Sorted, duplicate-free list of the labels present in `labels`.
std::vector<int> ClassSet(std::span<int const> labels);

/// tw_j <- cw_j for j in `classes`, zero for every other row.
void CwrPreinit(CwrHead const &head, std::span<int const> classes, DenseLayer &live);

/// Zeroes the head gradient rows of classes outside `classes`.
void CwrMaskGradient(std::span<int const> classes, std::vector<Tensor> &head_grads);

/// For j in `classes`:
///   wpast_j = sqrt(past_j / cur_j)
///   cw_j    = (cw_j * wpast_j + (tw_j - mean_tw)) / (wpast_j + 1)
///   past_j += cur_j
/// mean_tw is the scalar mean of the tw weights over the rows in `classes`
/// (the bias uses the mean bias of the same rows). `cur` is indexed by class.
void CwrConsolidate(CwrHead &head, std::span<int const> classes, std::span<std::size_t const> cur,
                    DenseLayer const &live);

/// Copies cw into the live head so the network predicts with the consolidated weights.
void CwrLoadConsolidated(CwrHead const &head, DenseLayer &live);

struct SiConfig
{
  double lambda{1.0};
  double xi{1e-7};
  double w1{0.5};
  double wi{0.5};
  double max_f{0.001};
};

/// Synaptic Intelligence bookkeeping over a fixed list of parameter tensors.
struct SiState
{
  SiState() = default;
  SiState(SiConfig config, std::span<Tensor const *const> params);

  SiConfig            config;
  std::vector<Tensor> theta_ref;   // snapshot at the end of the previous batch
  std::vector<Tensor> traj;        // omega
  std::vector<Tensor> importance;  // F
};

/// omega += -g * delta_theta
void SiAccumulate(SiState &state, std::span<Tensor const> grads, std::span<Tensor const> delta_theta);

/// F <- clip(F + w * max(omega, 0) / ((theta - theta_ref)^2 + xi), 0, max_F),
/// then theta_ref <- theta and omega <- 0.
void SiConsolidate(SiState &state, std::span<Tensor const *const> theta_now, bool first_batch);

struct SiPenaltyResult
{
  double              loss{0.0};
  std::vector<Tensor> dtheta;
};

/// loss = lambda * sum F (theta - theta_ref)^2, dtheta = 2 lambda F (theta - theta_ref).
SiPenaltyResult SiPenalty(std::span<Tensor const *const> theta, SiState const &state);

/// Streaming LDA over fixed features: running class means and a shared,
/// exactly updated pooled covariance.
///
///   S    += n_c / (n_c + 1) * (x - mu_c)(x - mu_c)^T    (pre-update mean)
///   mu_c += (x - mu_c) / (n_c + 1)
///   Sigma = S / N
///   Lambda  = inverse((1 - s) Sigma + s I)
///   score_c = (Lambda mu_c) . x - 0.5 mu_c . Lambda mu_c
///
/// Only observed classes are scored; ties go to the lowest class id.
class Dslda
{
public:
  Dslda(std::size_t dim, std::size_t classes, double shrinkage = 1e-4);

  std::size_t dim() const noexcept
  {
    return dim_;
  }
  std::size_t classes() const noexcept
  {
    return counts_.size();
  }
  double shrinkage() const noexcept
  {
    return shrinkage_;
  }
  std::size_t total() const noexcept
  {
    return total_;
  }
  std::size_t count(int label) const;

  void Update(std::span<float const> feature, int label);
  /// Updates with every row of `features` in order.
  void Update(Tensor const &features, std::span<int const> labels);

  int              Predict(std::span<float const> feature) const;
  std::vector<int> Predict(Tensor const &features) const;

  Eigen::VectorXd mean(int label) const;
  Eigen::MatrixXd covariance() const;

private:
  void Refresh() const;

  std::size_t              dim_;
  double                   shrinkage_;
  Eigen::MatrixXd          means_;  // [classes, dim]
  std::vector<std::size_t> counts_;
  Eigen::MatrixXd          scatter_;
  std::size_t              total_{0};

  mutable bool            stale_{true};
  mutable Eigen::MatrixXd weights_;  // rows Lambda mu_c
  mutable Eigen::VectorXd offsets_;  // -0.5 mu_c . Lambda mu_c
};

}  // namespace lr

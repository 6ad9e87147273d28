/* Copyright 2026 The dfq Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DFQ_BN_STATS_HPP_
#define DFQ_BN_STATS_HPP_

#include <torch/torch.h>

#include <string>
#include <vector>

#include "dfq/classifier.hpp"

namespace dfq {

// Floor applied to empirical variances inside the KL term and to the
// reference variances read from the teacher.
inline constexpr double kVarianceEps = 1e-6;

// Statistics of one batch norm layer: mean/var are (C,) tensors. For
// empirical statistics they stay attached to the autograd graph.
struct LayerStats {
  std::string layer;
  torch::Tensor mean;
  torch::Tensor var;
};

// Keyed by (layer, channel); layers are kept in forward order.
struct BNStatsTable {
  std::vector<LayerStats> layers;
  int64_t batch_size = 0;  // 0 for reference tables

  int64_t num_entries() const;
  const LayerStats* find(const std::string& layer) const;
};

// Stored running statistics of every BN layer, variances floored at eps.
BNStatsTable extract_reference_stats(Classifier teacher);

// Biased per-channel mean/variance over batch and spatial positions.
std::pair<torch::Tensor, torch::Tensor> channel_moments(const torch::Tensor& x);

// Runs `batch` through the teacher (evaluation mode, running statistics
// untouched) and records the moments of every BN layer's input. Returns the
// logits alongside so callers need a single forward pass.
struct CaptureResult {
  BNStatsTable stats;
  torch::Tensor logits;
};
CaptureResult capture_empirical_stats(Classifier teacher,
                                      const torch::Tensor& batch);

// KL( N(mu_hat, var_hat) || N(mu, var) ).
double gaussian_kl(double mu_hat, double var_hat, double mu, double var);
// Element-wise tensor form of the same expression.
torch::Tensor gaussian_kl(const torch::Tensor& mu_hat,
                          const torch::Tensor& var_hat,
                          const torch::Tensor& mu, const torch::Tensor& var);

// Sum over every (layer, channel) of gaussian_kl. Key sets must match.
torch::Tensor bns_loss(const BNStatsTable& empirical,
                       const BNStatsTable& reference);

// JSON rows {layer, channel, mean, variance}.
std::string stats_to_json(const BNStatsTable& table);

}  // namespace dfq

#endif  // DFQ_BN_STATS_HPP_

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

#include "dfq/bn_stats.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

#include "dfq/error.hpp"

namespace dfq {

int64_t BNStatsTable::num_entries() const {
  int64_t n = 0;
  for (const auto& l : layers) n += l.mean.numel();
  return n;
}

const LayerStats* BNStatsTable::find(const std::string& layer) const {
  for (const auto& l : layers) {
    if (l.layer == layer) return &l;
  }
  return nullptr;
}

BNStatsTable extract_reference_stats(Classifier teacher) {
  auto modules = teacher->bn_modules();
  DFQ_CHECK(!modules.empty(), ErrorCode::kStructure,
            "BNS loss undefined: no batch normalization layers");
  BNStatsTable table;
  for (const auto& [id, bn] : modules) {
    table.layers.push_back(
        {id, bn->running_mean.detach().clone(),
         bn->running_var.detach().clamp_min(kVarianceEps)});
  }
  return table;
}

std::pair<torch::Tensor, torch::Tensor> channel_moments(
    const torch::Tensor& x) {
  DFQ_CHECK(x.dim() >= 2, ErrorCode::kContract,
            "channel_moments expects (B, C, ...) input");
  std::vector<int64_t> dims{0};
  for (int64_t d = 2; d < x.dim(); ++d) dims.push_back(d);
  auto mean = x.mean(dims);
  std::vector<int64_t> view(x.dim(), 1);
  view[1] = x.size(1);
  auto centered = x - mean.view(view);
  auto var = (centered * centered).mean(dims);
  return {mean, var};
}

namespace {

class BnInputCapture : public ForwardHooks {
 public:
  void bn_input(const std::string& layer, const torch::Tensor& x) override {
    auto [mean, var] = channel_moments(x);
    stats.layers.push_back({layer, mean, var});
  }
  BNStatsTable stats;
};

}  // namespace

CaptureResult capture_empirical_stats(Classifier teacher,
                                      const torch::Tensor& batch) {
  DFQ_CHECK(batch.dim() >= 1 && batch.size(0) >= 2, ErrorCode::kContract,
            "capture_empirical_stats needs a batch of at least 2 samples");
  DFQ_CHECK(!teacher->is_training(), ErrorCode::kContract,
            "teacher must be in evaluation mode for statistics capture");
  BnInputCapture capture;
  auto logits = teacher->forward(batch, capture);
  DFQ_CHECK(!capture.stats.layers.empty(), ErrorCode::kStructure,
            "BNS loss undefined: no batch normalization layers");
  capture.stats.batch_size = batch.size(0);
  return {std::move(capture.stats), logits};
}

double gaussian_kl(double mu_hat, double var_hat, double mu, double var) {
  DFQ_CHECK(std::isfinite(mu_hat) && std::isfinite(var_hat) &&
                std::isfinite(mu) && std::isfinite(var),
            ErrorCode::kNumeric, "gaussian_kl: non-finite argument");
  DFQ_CHECK(var > 0, ErrorCode::kDomain,
            "gaussian_kl: reference variance must be positive");
  DFQ_CHECK(var_hat >= 0, ErrorCode::kDomain,
            "gaussian_kl: empirical variance must be non-negative");
  const double v = std::max(var_hat, kVarianceEps);
  const double d = mu_hat - mu;
  return (d * d + v) / (2.0 * var) - 0.5 * std::log(v / var) - 0.5;
}

torch::Tensor gaussian_kl(const torch::Tensor& mu_hat,
                          const torch::Tensor& var_hat,
                          const torch::Tensor& mu, const torch::Tensor& var) {
  auto v = var_hat.clamp_min(kVarianceEps);
  auto d = mu_hat - mu;
  return (d * d + v) / (2.0 * var) - 0.5 * torch::log(v / var) - 0.5;
}

torch::Tensor bns_loss(const BNStatsTable& empirical,
                       const BNStatsTable& reference) {
  std::set<std::string> ref_keys, emp_keys;
  for (const auto& l : reference.layers) ref_keys.insert(l.layer);
  for (const auto& l : empirical.layers) emp_keys.insert(l.layer);
  if (ref_keys != emp_keys) {
    std::string missing;
    for (const auto& k : ref_keys) {
      if (!emp_keys.count(k)) missing += " " + k + "(empirical)";
    }
    for (const auto& k : emp_keys) {
      if (!ref_keys.count(k)) missing += " " + k + "(reference)";
    }
    fail(ErrorCode::kStructure, "BNS key mismatch, missing:" + missing);
  }
  DFQ_CHECK(!reference.layers.empty(), ErrorCode::kStructure,
            "BNS loss undefined: no batch normalization layers");

  torch::Tensor total;
  for (const auto& emp : empirical.layers) {
    const auto* ref = reference.find(emp.layer);
    DFQ_CHECK(ref->mean.numel() == emp.mean.numel(), ErrorCode::kStructure,
              "BNS channel count mismatch at layer " + emp.layer);
    auto term =
        gaussian_kl(emp.mean, emp.var, ref->mean.to(emp.mean.dtype()),
                    ref->var.to(emp.var.dtype()))
            .sum();
    total = total.defined() ? total + term : term;
  }
  return total;
}

std::string stats_to_json(const BNStatsTable& table) {
  auto rows = nlohmann::json::array();
  for (const auto& l : table.layers) {
    auto mean = l.mean.detach().to(torch::kDouble).contiguous();
    auto var = l.var.detach().to(torch::kDouble).contiguous();
    for (int64_t c = 0; c < mean.numel(); ++c) {
      rows.push_back({{"layer", l.layer},
                      {"channel", c},
                      {"mean", mean[c].item<double>()},
                      {"variance", var[c].item<double>()}});
    }
  }
  return rows.dump(2);
}

}  // namespace dfq

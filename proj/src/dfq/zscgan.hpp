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

#ifndef DFQ_ZSCGAN_HPP_
#define DFQ_ZSCGAN_HPP_

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

#include "dfq/bn_stats.hpp"
#include "dfq/classifier.hpp"
#include "dfq/generator.hpp"

namespace dfq {

enum class LossMode { kCeOnly, kBnsOnly, kCePlusBns };
std::string loss_mode_name(LossMode m);  // "ce", "bns", "ce+bns"
LossMode parse_loss_mode(const std::string& s);

struct ZsCganConfig {
  int64_t epochs = 200;
  int64_t batches_per_epoch = 1000;
  int64_t batch_size = 128;
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossMode loss_mode = LossMode::kCePlusBns;
  double bns_weight = 1.0;
  uint64_t seed = 0;

  void validate() const;
};

// Mean over the batch of -log softmax(logits)[label].
torch::Tensor conditional_cross_entropy(const torch::Tensor& labels,
                                        const torch::Tensor& logits);

struct ZsCganLoss {
  torch::Tensor total;
  torch::Tensor ce;   // always computed, excluded from total in kBnsOnly
  torch::Tensor bns;  // always computed, excluded from total in kCeOnly
  torch::Tensor logits;
};

// Generator runs in whatever mode it is in; the teacher must be frozen.
ZsCganLoss zscgan_loss(ConditionalGenerator g, Classifier teacher,
                       const torch::Tensor& z, const torch::Tensor& labels,
                       const ZsCganConfig& cfg,
                       const BNStatsTable& reference);

struct ZsCganEpoch {
  int64_t epoch = 0;
  double total = 0;
  double ce = 0;
  double bns = 0;
  double fidelity = 0;  // fraction with argmax T(G(z, y)) == y
  double seconds = 0;
};

struct ZsCganReport {
  std::vector<ZsCganEpoch> epochs;
  double wall_clock = 0;

  // epoch,total,ce,bns,fidelity
  std::string to_csv() const;
};

double cosine_lr(double base, int64_t step, int64_t total_steps);

// Owns the generator's optimizer so generator updates can continue later
// (data-free QAT) with the same Adam state.
class ZsCganTrainer {
 public:
  ZsCganTrainer(ConditionalGenerator g, Classifier teacher, ZsCganConfig cfg);

  struct Step {
    double total = 0;
    double ce = 0;
    double bns = 0;
    double fidelity = 0;
  };

  // Fresh (z, y) and one optimizer step at learning rate `lr`. Throws
  // kDiverged on a non-finite loss without touching the parameters.
  Step step(double lr);

  using EpochCallback =
      std::function<void(const ZsCganEpoch&, ConditionalGenerator)>;
  // Full cosine schedule. On divergence the generator is restored to the
  // state at the end of the last finite epoch before kDiverged is thrown.
  ZsCganReport run(const EpochCallback& on_epoch = {});

  ConditionalGenerator generator() const { return g_; }
  const ZsCganConfig& config() const { return cfg_; }
  torch::optim::Adam& optimizer() { return *opt_; }
  at::Generator& rng() { return rng_; }

 private:
  ConditionalGenerator g_;
  Classifier teacher_;
  ZsCganConfig cfg_;
  BNStatsTable reference_;
  std::unique_ptr<torch::optim::Adam> opt_;
  at::Generator rng_;
};

std::pair<ConditionalGenerator, ZsCganReport> train_generator(
    ConditionalGenerator g, Classifier teacher, const ZsCganConfig& cfg,
    const ZsCganTrainer::EpochCallback& on_epoch = {});

// Draws z ~ N(0, I) and y ~ U{0..K-1}.
std::pair<torch::Tensor, torch::Tensor> sample_conditioning(
    const ConditionalGeneratorImpl& g, int64_t n, at::Generator& rng);

struct SyntheticBatch {
  torch::Tensor images;         // (n, C, H, W)
  torch::Tensor labels;         // (n,)
  torch::Tensor teacher_probs;  // (n, K), rows sum to 1
};

// Deterministic for a fixed seed; the generator runs in evaluation mode.
SyntheticBatch sample_synthetic(ConditionalGenerator g, Classifier teacher,
                                int64_t n, uint64_t seed,
                                int64_t chunk = 256);

// Label fidelity of n fresh samples (evaluation mode).
double label_fidelity(ConditionalGenerator g, Classifier teacher, int64_t n,
                      uint64_t seed);

}  // namespace dfq

#endif  // DFQ_ZSCGAN_HPP_

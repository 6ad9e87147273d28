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

#include "dfq/zscgan.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dfq/data.hpp"
#include "dfq/digest.hpp"
#include "dfq/error.hpp"

namespace dfq {

std::string loss_mode_name(LossMode m) {
  switch (m) {
    case LossMode::kCeOnly:
      return "ce";
    case LossMode::kBnsOnly:
      return "bns";
    case LossMode::kCePlusBns:
      return "ce+bns";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "ce") return LossMode::kCeOnly;
  if (s == "bns") return LossMode::kBnsOnly;
  if (s == "ce+bns") return LossMode::kCePlusBns;
  fail(ErrorCode::kInvalidArgument,
       "unknown loss mode '" + s + "' (expected ce+bns, ce or bns)");
}

void ZsCganConfig::validate() const {
  DFQ_CHECK(epochs >= 0 && batches_per_epoch > 0 && batch_size >= 2,
            ErrorCode::kInvalidArgument,
            "generator schedule needs epochs >= 0, batches > 0, batch >= 2");
  DFQ_CHECK(lr > 0 && beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1,
            ErrorCode::kInvalidArgument, "invalid Adam hyperparameters");
  DFQ_CHECK(bns_weight >= 0, ErrorCode::kInvalidArgument,
            "bns_weight must be non-negative");
}

torch::Tensor conditional_cross_entropy(const torch::Tensor& labels,
                                        const torch::Tensor& logits) {
  DFQ_CHECK(logits.dim() == 2 && labels.dim() == 1 &&
                labels.size(0) == logits.size(0),
            ErrorCode::kContract,
            "cross entropy expects logits (B, K) and labels (B,), got " +
                shape_string(logits.sizes()) + " and " +
                shape_string(labels.sizes()));
  DFQ_CHECK(torch::isfinite(logits).all().item<bool>(), ErrorCode::kNumeric,
            "cross entropy: non-finite logits");
  if (labels.numel() > 0) {
    DFQ_CHECK(labels.min().item<int64_t>() >= 0 &&
                  labels.max().item<int64_t>() < logits.size(1),
              ErrorCode::kContract, "cross entropy: label out of range");
  }
  auto log_p = torch::log_softmax(logits, 1);
  return -log_p.gather(1, labels.view({-1, 1})).mean();
}

ZsCganLoss zscgan_loss(ConditionalGenerator g, Classifier teacher,
                       const torch::Tensor& z, const torch::Tensor& labels,
                       const ZsCganConfig& cfg,
                       const BNStatsTable& reference) {
  DFQ_CHECK(teacher->frozen(), ErrorCode::kContract,
            "ZS-CGAN needs a frozen teacher");
  auto images = g->forward(z, labels);
  auto captured = capture_empirical_stats(teacher, images);
  ZsCganLoss out;
  out.logits = captured.logits;
  out.ce = conditional_cross_entropy(labels, captured.logits);
  out.bns = bns_loss(captured.stats, reference);
  switch (cfg.loss_mode) {
    case LossMode::kCeOnly:
      out.total = out.ce;
      break;
    case LossMode::kBnsOnly:
      out.total = cfg.bns_weight * out.bns;
      break;
    case LossMode::kCePlusBns:
      out.total = out.ce + cfg.bns_weight * out.bns;
      break;
  }
  return out;
}

std::string ZsCganReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,total,ce,bns,fidelity\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.total << ',' << e.ce << ',' << e.bns << ','
       << e.fidelity << '\n';
  }
  return os.str();
}

double cosine_lr(double base, int64_t step, int64_t total_steps) {
  if (total_steps <= 0) return base;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

std::pair<torch::Tensor, torch::Tensor> sample_conditioning(
    const ConditionalGeneratorImpl& g, int64_t n, at::Generator& rng) {
  const auto& s = g.spec();
  auto dtype = g.parameters().front().scalar_type();
  auto z = torch::randn({n, s.noise_dim}, rng, torch::dtype(dtype));
  auto y = torch::randint(0, s.num_classes, {n}, rng, torch::kLong);
  return {z, y};
}

// ---------------------------------------------------------------------------

ZsCganTrainer::ZsCganTrainer(ConditionalGenerator g, Classifier teacher,
                             ZsCganConfig cfg)
    : g_(std::move(g)),
      teacher_(std::move(teacher)),
      cfg_(cfg),
      rng_(make_rng(cfg.seed)) {
  cfg_.validate();
  DFQ_CHECK(teacher_->frozen(), ErrorCode::kContract,
            "ZS-CGAN needs a frozen teacher");
  DFQ_CHECK(g_->spec().num_classes == teacher_->arch().num_classes,
            ErrorCode::kContract,
            "generator and teacher disagree on the number of classes");
  reference_ = extract_reference_stats(teacher_);
  opt_ = std::make_unique<torch::optim::Adam>(
      g_->parameters(), torch::optim::AdamOptions(cfg_.lr).betas(
                            {cfg_.beta1, cfg_.beta2}));
}

ZsCganTrainer::Step ZsCganTrainer::step(double lr) {
  for (auto& group : opt_->param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
  g_->train();
  auto [z, y] = sample_conditioning(*g_, cfg_.batch_size, rng_);
  ZsCganLoss loss;
  try {
    loss = zscgan_loss(g_, teacher_, z, y, cfg_, reference_);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNumeric) throw;
    fail(ErrorCode::kDiverged, std::string("ZS-CGAN loss is not finite: ") + e.what());
  }
  Step s;
  s.total = loss.total.item<double>();
  s.ce = loss.ce.item<double>();
  s.bns = loss.bns.item<double>();
  if (!std::isfinite(s.total)) {
    fail(ErrorCode::kDiverged, "ZS-CGAN loss is not finite");
  }
  s.fidelity =
      loss.logits.argmax(1).eq(y).to(torch::kDouble).mean().item<double>();
  opt_->zero_grad();
  loss.total.backward();
  opt_->step();
  return s;
}

ZsCganReport ZsCganTrainer::run(const EpochCallback& on_epoch) {
  const auto teacher_before = state_digest(*teacher_);
  const auto start = std::chrono::steady_clock::now();
  const int64_t total_steps = cfg_.epochs * cfg_.batches_per_epoch;
  auto last_good = clone_generator(g_);
  int64_t last_good_epoch = 0;

  ZsCganReport report;
  int64_t global = 0;
  for (int64_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    ZsCganEpoch row;
    row.epoch = epoch;
    for (int64_t b = 0; b < cfg_.batches_per_epoch; ++b, ++global) {
      Step s;
      try {
        s = step(cosine_lr(cfg_.lr, global, total_steps));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDiverged) throw;
        copy_state(*last_good, *g_);
        fail(ErrorCode::kDiverged,
             "ZS-CGAN diverged at epoch " + std::to_string(epoch) +
                 ", batch " + std::to_string(b) +
                 "; generator restored to the end of epoch " +
                 std::to_string(last_good_epoch));
      }
      row.total += s.total;
      row.ce += s.ce;
      row.bns += s.bns;
      row.fidelity += s.fidelity;
    }
    const double n = static_cast<double>(cfg_.batches_per_epoch);
    row.total /= n;
    row.ce /= n;
    row.bns /= n;
    row.fidelity /= n;
    row.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    report.epochs.push_back(row);
    copy_state(*g_, *last_good);
    last_good_epoch = epoch;
    if (on_epoch) on_epoch(row, g_);
  }
  report.wall_clock =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  DFQ_CHECK(state_digest(*teacher_) == teacher_before, ErrorCode::kInternal,
            "teacher parameters changed during generator training");
  g_->eval();
  return report;
}

std::pair<ConditionalGenerator, ZsCganReport> train_generator(
    ConditionalGenerator g, Classifier teacher, const ZsCganConfig& cfg,
    const ZsCganTrainer::EpochCallback& on_epoch) {
  ZsCganTrainer trainer(g, std::move(teacher), cfg);
  auto report = trainer.run(on_epoch);
  return {g, std::move(report)};
}

// ---------------------------------------------------------------------------

SyntheticBatch sample_synthetic(ConditionalGenerator g, Classifier teacher,
                                int64_t n, uint64_t seed, int64_t chunk) {
  DFQ_CHECK(n > 0, ErrorCode::kContract,
            "sample count must be positive, got " + std::to_string(n));
  torch::NoGradGuard no_grad;
  auto rng = make_rng(seed);
  auto [z, y] = sample_conditioning(*g, n, rng);
  std::vector<torch::Tensor> images, probs;
  for (int64_t off = 0; off < n; off += chunk) {
    const int64_t len = std::min(chunk, n - off);
    auto x = generator_forward(g, z.narrow(0, off, len), y.narrow(0, off, len));
    probs.push_back(torch::softmax(teacher_forward(teacher, x), 1));
    images.push_back(x);
  }
  return {torch::cat(images), y, torch::cat(probs)};
}

double label_fidelity(ConditionalGenerator g, Classifier teacher, int64_t n,
                      uint64_t seed) {
  auto batch = sample_synthetic(g, teacher, n, seed);
  return batch.teacher_probs.argmax(1)
      .eq(batch.labels)
      .to(torch::kDouble)
      .mean()
      .item<double>();
}

}  // namespace dfq

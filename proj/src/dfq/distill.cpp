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

#include "dfq/distill.hpp"

#include <chrono>
#include <sstream>

#include "dfq/digest.hpp"
#include "dfq/error.hpp"

namespace dfq {

void KDConfig::validate() const {
  DFQ_CHECK(lambda >= 0 && lambda <= 1, ErrorCode::kInvalidArgument,
            "KD lambda must lie in [0, 1]");
  DFQ_CHECK(temperature > 0, ErrorCode::kContract,
            "KD temperature must be positive");
  DFQ_CHECK(!data_free || lambda == 1.0, ErrorCode::kInvalidArgument,
            "data-free distillation requires lambda = 1 (no ground-truth "
            "labels)");
  DFQ_CHECK(epochs >= 0 && batches_per_epoch > 0 && batch_size > 0,
            ErrorCode::kInvalidArgument, "invalid KD schedule");
  DFQ_CHECK(lr > 0 && momentum >= 0, ErrorCode::kInvalidArgument,
            "invalid KD optimizer settings");
}

torch::Tensor kd_loss(const torch::Tensor& teacher_logits,
                      const torch::Tensor& student_logits,
                      const KDConfig& cfg) {
  DFQ_CHECK(cfg.temperature > 0, ErrorCode::kContract,
            "KD temperature must be positive");
  DFQ_CHECK(teacher_logits.sizes() == student_logits.sizes() &&
                teacher_logits.dim() == 2,
            ErrorCode::kContract,
            "KD expects matching (B, K) logits, got " +
                shape_string(teacher_logits.sizes()) + " and " +
                shape_string(student_logits.sizes()));
  auto target = torch::softmax(teacher_logits.detach() / cfg.temperature, 1);
  auto log_q = torch::log_softmax(student_logits / cfg.temperature, 1);
  return -(target * log_q).sum(1).mean();
}

torch::Tensor kd_mixed_loss(const torch::Tensor& labels,
                            const torch::Tensor& teacher_logits,
                            const torch::Tensor& student_logits,
                            const KDConfig& cfg) {
  DFQ_CHECK(cfg.lambda >= 0 && cfg.lambda <= 1, ErrorCode::kInvalidArgument,
            "KD lambda must lie in [0, 1]");
  if (cfg.lambda == 1.0) return kd_loss(teacher_logits, student_logits, cfg);
  auto hard = conditional_cross_entropy(labels, student_logits);
  if (cfg.lambda == 0.0) return hard;
  return (1.0 - cfg.lambda) * hard +
         cfg.lambda * kd_loss(teacher_logits, student_logits, cfg);
}

std::string DistillReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,kd_loss,accuracy,gen_total,gen_ce,gen_bns\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.kd_loss << ',' << e.accuracy << ','
       << e.gen_total << ',' << e.gen_ce << ',' << e.gen_bns << '\n';
  }
  return os.str();
}

namespace {

// Shared optimizer loop; `next_batch` yields (images, labels) for the step
// and may perform side work (generator updates) reported through `gen`.
struct GenStats {
  double total = 0, ce = 0, bns = 0;
  bool active = false;
};

template <typename NextBatch>
DistillReport distill_loop(StudentModel& student, Classifier teacher,
                           const KDConfig& cfg, NextBatch&& next_batch,
                           const StudentEvaluator& evaluate) {
  DFQ_CHECK(teacher->frozen(), ErrorCode::kContract,
            "distillation needs a frozen teacher");
  const auto teacher_before = state_digest(*teacher);
  const auto start = std::chrono::steady_clock::now();

  auto params = student.net()->parameters();
  torch::optim::SGD opt(params, torch::optim::SGDOptions(cfg.lr)
                                    .momentum(cfg.momentum)
                                    .nesterov(cfg.momentum > 0));
  auto last_good = clone_classifier(student.net());
  int64_t last_good_epoch = 0;

  DistillReport report;
  const int64_t total_steps = cfg.epochs * cfg.batches_per_epoch;
  int64_t global = 0;
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    DistillEpoch row;
    row.epoch = epoch;
    GenStats gen_sum;
    student.train();
    for (int64_t b = 0; b < cfg.batches_per_epoch; ++b, ++global) {
      GenStats gen;
      auto [images, labels] = next_batch(global, total_steps, gen);
      if (gen.active) {
        gen_sum.active = true;
        gen_sum.total += gen.total;
        gen_sum.ce += gen.ce;
        gen_sum.bns += gen.bns;
      }
      torch::Tensor teacher_logits;
      {
        torch::NoGradGuard no_grad;
        teacher_logits = teacher_forward(teacher, images);
      }
      for (auto& group : opt.param_groups()) {
        static_cast<torch::optim::SGDOptions&>(group.options())
            .lr(cosine_lr(cfg.lr, global, total_steps));
      }
      torch::Tensor loss;
      double value = std::numeric_limits<double>::quiet_NaN();
      try {
        loss = kd_mixed_loss(labels, teacher_logits, student.forward(images),
                             cfg);
        value = loss.item<double>();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumeric) throw;
      }
      if (!std::isfinite(value)) {
        copy_state(*last_good, *student.net());
        student.eval();
        fail(ErrorCode::kDiverged,
             "distillation diverged at epoch " + std::to_string(epoch) +
                 "; student restored to the end of epoch " +
                 std::to_string(last_good_epoch));
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      row.kd_loss += value;
    }
    const double n = static_cast<double>(cfg.batches_per_epoch);
    row.kd_loss /= n;
    if (gen_sum.active) {
      row.gen_total = gen_sum.total / n;
      row.gen_ce = gen_sum.ce / n;
      row.gen_bns = gen_sum.bns / n;
    }
    student.refresh_weight_params();
    student.eval();
    if (evaluate) row.accuracy = evaluate(student);
    row.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    report.epochs.push_back(row);
    copy_state(*student.net(), *last_good);
    last_good_epoch = epoch;
  }
  student.eval();
  report.wall_clock =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  DFQ_CHECK(state_digest(*teacher) == teacher_before, ErrorCode::kInternal,
            "teacher parameters changed during distillation");
  return report;
}

}  // namespace

DistillReport train_data_free_qat(StudentModel& student, Classifier teacher,
                                  ZsCganTrainer& generator,
                                  const KDConfig& cfg,
                                  const StudentEvaluator& evaluate) {
  cfg.validate();
  DFQ_CHECK(cfg.data_free, ErrorCode::kInvalidArgument,
            "train_data_free_qat needs a data-free KD config");
  auto g = generator.generator();
  auto rng = make_rng(cfg.seed);
  const double gen_lr = generator.config().lr;
  auto next = [&](int64_t step, int64_t total, GenStats& gen) {
    if (cfg.continue_generator_updates) {
      auto s = generator.step(cosine_lr(gen_lr, step, total));
      gen = {s.total, s.ce, s.bns, true};
    }
    torch::NoGradGuard no_grad;
    auto [z, y] = sample_conditioning(*g, cfg.batch_size, rng);
    return std::make_pair(generator_forward(g, z, y), y);
  };
  auto report = distill_loop(student, teacher, cfg, next, evaluate);
  g->eval();
  return report;
}

DistillReport train_data_dependent_qat(StudentModel& student,
                                       Classifier teacher,
                                       const LabeledImages& train_set,
                                       const KDConfig& cfg,
                                       const StudentEvaluator& evaluate) {
  KDConfig c = cfg;
  c.lambda = 1.0;
  c.data_free = false;
  c.continue_generator_updates = false;
  c.validate();
  const int64_t n = train_set.size();
  DFQ_CHECK(n > 0, ErrorCode::kIngestion, "empty training set");
  auto rng = make_rng(c.seed);
  torch::Tensor order;
  int64_t cursor = n;
  auto next = [&](int64_t, int64_t, GenStats&) {
    if (cursor + c.batch_size > n) {
      order = torch::randperm(n, rng, torch::kLong);
      cursor = 0;
    }
    auto idx = order.narrow(0, cursor, std::min(c.batch_size, n));
    cursor += c.batch_size;
    return std::make_pair(train_set.images.index_select(0, idx),
                          train_set.labels.index_select(0, idx));
  };
  return distill_loop(student, teacher, c, next, evaluate);
}

}  // namespace dfq

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

#ifndef DFQ_DISTILL_HPP_
#define DFQ_DISTILL_HPP_

#include <torch/torch.h>

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dfq/classifier.hpp"
#include "dfq/data.hpp"
#include "dfq/quant.hpp"
#include "dfq/zscgan.hpp"

namespace dfq {

struct KDConfig {
  double lambda = 1.0;
  double temperature = 1.0;
  int64_t epochs = 50;
  int64_t batches_per_epoch = 1000;
  int64_t batch_size = 128;
  double lr = 1e-4;
  double momentum = 0.9;
  bool continue_generator_updates = true;
  // Ground-truth labels are unavailable without data, so data-free runs
  // reject lambda != 1.
  bool data_free = true;
  uint64_t seed = 0;

  void validate() const;
};

// Soft-target cross entropy H(softmax(t / T), softmax(s / T)), batch mean.
// The teacher distribution is detached.
torch::Tensor kd_loss(const torch::Tensor& teacher_logits,
                      const torch::Tensor& student_logits,
                      const KDConfig& cfg);

// (1 - lambda) * H(y, S) + lambda * H(T, S).
torch::Tensor kd_mixed_loss(const torch::Tensor& labels,
                            const torch::Tensor& teacher_logits,
                            const torch::Tensor& student_logits,
                            const KDConfig& cfg);

struct DistillEpoch {
  int64_t epoch = 0;
  double kd_loss = 0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  // Generator losses when it is co-trained, NaN otherwise.
  double gen_total = std::numeric_limits<double>::quiet_NaN();
  double gen_ce = std::numeric_limits<double>::quiet_NaN();
  double gen_bns = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0;
};

struct DistillReport {
  std::vector<DistillEpoch> epochs;
  double wall_clock = 0;

  // epoch,kd_loss,accuracy,gen_total,gen_ce,gen_bns
  std::string to_csv() const;
};

// Evaluates a student in evaluation mode; used once per epoch when set.
using StudentEvaluator = std::function<double(StudentModel&)>;

// Per batch: optional ZS-CGAN step on the generator, fresh G(z, y) images,
// one Nesterov step on the student against the frozen teacher. Activation
// ranges follow their EMA while training and are frozen afterwards.
DistillReport train_data_free_qat(StudentModel& student, Classifier teacher,
                                  ZsCganTrainer& generator,
                                  const KDConfig& cfg,
                                  const StudentEvaluator& evaluate = {});

// Same loop over shuffled real training images; lambda is forced to 1.
DistillReport train_data_dependent_qat(StudentModel& student,
                                       Classifier teacher,
                                       const LabeledImages& train_set,
                                       const KDConfig& cfg,
                                       const StudentEvaluator& evaluate = {});

}  // namespace dfq

#endif  // DFQ_DISTILL_HPP_

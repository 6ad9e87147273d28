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

#ifndef DFQ_TEACHER_HPP_
#define DFQ_TEACHER_HPP_

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dfq/classifier.hpp"
#include "dfq/data.hpp"
#include "dfq/quant.hpp"

namespace dfq {

struct TeacherConfig {
  std::string arch = "mnist-bn-cnn";
  std::string dataset = "mnist-subset";
  int64_t image_size = 16;
  int64_t epochs = 15;
  int64_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // Random translation of up to this many pixels (zero fill).
  int64_t max_shift = 1;
  uint64_t seed = 0;
};

struct TeacherEpoch {
  int64_t epoch = 0;
  double loss = 0;
  double train_accuracy = 0;
  double test_accuracy = 0;
};

struct TrainedTeacher {
  Classifier model{nullptr};  // frozen
  double accuracy = 0;        // top-1 on the test split
  std::vector<TeacherEpoch> history;
};

// SGD with Nesterov momentum and cosine decay on the training split; the
// result is frozen and evaluated on the test split. Zero epochs raise
// "teacher must be trained before export".
TrainedTeacher build_desk_teacher(const TeacherConfig& cfg,
                                  const LabeledImages& train_set,
                                  const LabeledImages& test_set);

// Top-1 accuracy in evaluation mode; empty sets raise kInvalidArgument.
double evaluate(Classifier model, const LabeledImages& test_set,
                int64_t batch_size = 500);
double evaluate(StudentModel& student, const LabeledImages& test_set,
                int64_t batch_size = 500);
double evaluate_logits(const std::function<torch::Tensor(const torch::Tensor&)>&
                           forward,
                       const LabeledImages& test_set, int64_t batch_size);

}  // namespace dfq

#endif  // DFQ_TEACHER_HPP_

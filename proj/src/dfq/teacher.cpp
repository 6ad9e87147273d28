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

#include "dfq/teacher.hpp"

#include "dfq/error.hpp"
#include "dfq/zscgan.hpp"

namespace dfq {

namespace {

torch::Tensor random_shift(const torch::Tensor& x, int64_t max_shift,
                           at::Generator& rng) {
  if (max_shift <= 0) return x;
  const int64_t h = x.size(2), w = x.size(3);
  auto padded = torch::constant_pad_nd(
      x, {max_shift, max_shift, max_shift, max_shift}, 0.0);
  auto offs = torch::randint(0, 2 * max_shift + 1, {x.size(0), 2}, rng,
                             torch::kLong);
  auto acc = offs.accessor<int64_t, 2>();
  std::vector<torch::Tensor> out;
  out.reserve(x.size(0));
  for (int64_t i = 0; i < x.size(0); ++i) {
    out.push_back(padded[i].narrow(1, acc[i][0], h).narrow(2, acc[i][1], w));
  }
  return torch::stack(out);
}

}  // namespace

TrainedTeacher build_desk_teacher(const TeacherConfig& cfg,
                                  const LabeledImages& train_set,
                                  const LabeledImages& test_set) {
  DFQ_CHECK(cfg.epochs > 0, ErrorCode::kInvalidArgument,
            "teacher must be trained before export");
  DFQ_CHECK(cfg.batch_size > 0 && cfg.lr > 0, ErrorCode::kInvalidArgument,
            "invalid teacher schedule");
  DFQ_CHECK(train_set.size() > 0, ErrorCode::kIngestion,
            "empty training split");
  const auto& info = train_set.info;
  torch::manual_seed(cfg.seed);
  Classifier net(arch_preset(cfg.arch, info.channels, train_set.images.size(2),
                             info.num_classes));
  auto rng = make_rng(cfg.seed);
  torch::optim::SGD opt(net->parameters(),
                        torch::optim::SGDOptions(cfg.lr)
                            .momentum(cfg.momentum)
                            .nesterov(true)
                            .weight_decay(cfg.weight_decay));
  const int64_t n = train_set.size();
  const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total = cfg.epochs * steps_per_epoch;
  // Zero-shifted pixels must map to the normalized background value.
  const auto background =
      normalize_images(torch::zeros({1, info.channels, 1, 1}),
                       info.normalization);

  TrainedTeacher out;
  int64_t global = 0;
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    net->train();
    auto order = torch::randperm(n, rng, torch::kLong);
    TeacherEpoch row;
    row.epoch = epoch;
    int64_t correct = 0;
    for (int64_t off = 0; off < n; off += cfg.batch_size, ++global) {
      auto idx = order.narrow(0, off, std::min(cfg.batch_size, n - off));
      auto x = train_set.images.index_select(0, idx);
      auto y = train_set.labels.index_select(0, idx);
      x = random_shift(x - background, cfg.max_shift, rng) + background;
      for (auto& group : opt.param_groups()) {
        static_cast<torch::optim::SGDOptions&>(group.options())
            .lr(cosine_lr(cfg.lr, global, total));
      }
      auto logits = net->forward(x);
      auto loss = torch::cross_entropy_loss(logits, y);
      opt.zero_grad();
      loss.backward();
      opt.step();
      row.loss += loss.item<double>() * idx.size(0);
      correct += logits.argmax(1).eq(y).sum().item<int64_t>();
    }
    row.loss /= static_cast<double>(n);
    row.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    row.test_accuracy = evaluate(net, test_set);
    out.history.push_back(row);
  }
  net->freeze();
  out.model = net;
  out.accuracy = evaluate(net, test_set);
  return out;
}

double evaluate_logits(
    const std::function<torch::Tensor(const torch::Tensor&)>& forward,
    const LabeledImages& test_set, int64_t batch_size) {
  const int64_t n = test_set.size();
  DFQ_CHECK(n > 0, ErrorCode::kInvalidArgument,
            "cannot evaluate on an empty test set");
  torch::NoGradGuard no_grad;
  int64_t correct = 0;
  for (int64_t off = 0; off < n; off += batch_size) {
    const int64_t len = std::min(batch_size, n - off);
    auto logits = forward(test_set.images.narrow(0, off, len));
    correct += logits.argmax(1)
                   .eq(test_set.labels.narrow(0, off, len))
                   .sum()
                   .item<int64_t>();
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double evaluate(Classifier model, const LabeledImages& test_set,
                int64_t batch_size) {
  const bool was_training = model->is_training();
  model->eval();
  auto acc = evaluate_logits(
      [&](const torch::Tensor& x) { return model->forward(x); }, test_set,
      batch_size);
  if (!model->frozen()) model->train(was_training);
  return acc;
}

double evaluate(StudentModel& student, const LabeledImages& test_set,
                int64_t batch_size) {
  const bool was_training = student.is_training();
  student.eval();
  auto acc = evaluate_logits(
      [&](const torch::Tensor& x) { return student.forward(x); }, test_set,
      batch_size);
  student.train(was_training);
  return acc;
}

}  // namespace dfq

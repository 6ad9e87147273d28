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

#ifndef DFQ_CLASSIFIER_HPP_
#define DFQ_CLASSIFIER_HPP_

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dfq {

// Interception points inside a classifier forward pass. The teacher, the
// range observers used for calibration and the fake-quant student all run
// the same graph; they differ only in the hooks they pass.
class ForwardHooks {
 public:
  virtual ~ForwardHooks() = default;

  virtual torch::Tensor weight(const std::string& /*site*/,
                               const torch::Tensor& w) {
    return w;
  }
  virtual torch::Tensor activation(const std::string& /*site*/,
                                   const torch::Tensor& a) {
    return a;
  }
  // Called with the tensor about to enter batch norm layer `layer`.
  virtual void bn_input(const std::string& /*layer*/,
                        const torch::Tensor& /*x*/) {}
};

// Per-channel input normalization applied at ingestion.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct ArchSpec {
  std::string id;      // preset name, recorded in checkpoint manifests
  std::string family;  // "bn-cnn" or "resnet"
  int64_t in_channels = 1;
  int64_t height = 16;
  int64_t width = 16;
  int64_t num_classes = 10;
  std::vector<int64_t> widths;
};

// Known presets: "mnist-bn-cnn" (3 conv-BN-ReLU stages), "cifar-resnet8"
// (stem + three basic blocks). Unknown ids raise kInvalidArgument.
ArchSpec arch_preset(const std::string& id, int64_t in_channels,
                     int64_t image_size, int64_t num_classes);

// conv -> [bn] -> [relu]. The conv output feeds batch norm directly, so
// convs carry no bias until batch norm is folded into them.
class ConvBnImpl : public torch::nn::Module {
 public:
  ConvBnImpl(std::string name, int64_t in, int64_t out, int64_t kernel,
             int64_t stride, bool relu);

  torch::Tensor forward(const torch::Tensor& x, ForwardHooks& hooks);
  void fold();

  const std::string& name() const { return name_; }
  bool folded() const { return folded_; }
  torch::nn::BatchNorm2d& bn() { return bn_; }
  const torch::nn::BatchNorm2d& bn() const { return bn_; }

  torch::Tensor weight;
  torch::Tensor bias;  // undefined until folded

 private:
  std::string name_;
  int64_t stride_;
  int64_t padding_;
  bool relu_;
  bool folded_ = false;
  torch::nn::BatchNorm2d bn_{nullptr};
};
TORCH_MODULE(ConvBn);

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(std::string name, int64_t in, int64_t out, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x, ForwardHooks& hooks);

  ConvBn first{nullptr};
  ConvBn second{nullptr};
  ConvBn shortcut{nullptr};  // null when the identity shortcut applies

 private:
  std::string name_;
};
TORCH_MODULE(BasicBlock);

// The classifier graph shared by teachers and quantized students.
class ClassifierImpl : public torch::nn::Module {
 public:
  explicit ClassifierImpl(ArchSpec arch);

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x, ForwardHooks& hooks);

  const ArchSpec& arch() const { return arch_; }

  // Batch norm layer ids in forward order (empty once folded).
  std::vector<std::string> bn_layers() const;
  std::vector<std::pair<std::string, torch::nn::BatchNorm2d>> bn_modules()
      const;

  // (site, tensor) for every conv/linear kernel, in forward order.
  std::vector<std::pair<std::string, torch::Tensor>> weight_sites() const;
  // Activation site names in forward order, found by a recording pass.
  std::vector<std::string> activation_sites();

  // Evaluation mode, no parameter gradients; train() becomes a no-op.
  void freeze();
  bool frozen() const { return frozen_; }
  void train(bool on = true) override;

  void fold_batch_norm();
  bool folded() const { return folded_; }

 private:
  void check_input(const torch::Tensor& x) const;
  std::vector<ConvBn> conv_units() const;

  ArchSpec arch_;
  bool frozen_ = false;
  bool folded_ = false;
  std::vector<ConvBn> stages_;       // bn-cnn
  ConvBn stem_{nullptr};             // resnet
  std::vector<BasicBlock> blocks_;   // resnet
  torch::Tensor fc_weight_;
  torch::Tensor fc_bias_;
};
TORCH_MODULE(Classifier);

// Copies every parameter and buffer; the modules must share structure.
void copy_state(const torch::nn::Module& src, torch::nn::Module& dst);

// Independent deep copy (same arch, same fold state, unfrozen).
Classifier clone_classifier(Classifier src);

// Frozen-teacher inference: contract-checked forward in evaluation mode.
// Gradients still flow to `batch` when it requires them.
torch::Tensor teacher_forward(Classifier teacher,
                              const torch::Tensor& batch);

}  // namespace dfq

#endif  // DFQ_CLASSIFIER_HPP_

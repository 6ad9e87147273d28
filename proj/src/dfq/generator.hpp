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

#ifndef DFQ_GENERATOR_HPP_
#define DFQ_GENERATOR_HPP_

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "dfq/classifier.hpp"

namespace dfq {

struct GeneratorSpec {
  int64_t noise_dim = 128;
  int64_t num_classes = 10;
  int64_t channels = 1;
  int64_t height = 16;
  int64_t width = 16;
  int64_t base_channels = 16;
  // Teacher input normalization; tanh output in [-1, 1] is mapped to
  // pixel space [0, 1] and then normalized with it.
  Normalization normalization;
};

// Batch norm without its own affine part; the per-channel scale and shift
// are rows of (num_classes x C) tables selected by the label.
class ConditionalBatchNormImpl : public torch::nn::Module {
 public:
  ConditionalBatchNormImpl(int64_t features, int64_t num_classes);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& labels);

  int64_t num_classes() const { return gamma.size(0); }

  torch::Tensor gamma;  // (K, C), initialized to 1
  torch::Tensor beta;   // (K, C), initialized to 0

 private:
  torch::nn::BatchNorm2d norm_{nullptr};
};
TORCH_MODULE(ConditionalBatchNorm);

// Decoder: linear projection of z to a 4x4 map, then log2(H/4) blocks of
// nearest upsample -> 3x3 conv -> CBN -> ReLU, then 3x3 conv -> tanh.
// The label enters only through the CBN layers.
class ConditionalGeneratorImpl : public torch::nn::Module {
 public:
  explicit ConditionalGeneratorImpl(GeneratorSpec spec);

  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& labels);

  const GeneratorSpec& spec() const { return spec_; }
  const std::vector<ConditionalBatchNorm>& cbn_layers() const { return cbn_; }

  // Per-channel (lower, upper) bound of the output, shape (C,) each.
  std::pair<torch::Tensor, torch::Tensor> output_bounds() const;

 private:
  GeneratorSpec spec_;
  torch::nn::Linear project_{nullptr};
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<ConditionalBatchNorm> cbn_;
  torch::nn::Conv2d to_image_{nullptr};
  torch::Tensor pixel_scale_;   // 1 / (2 std), shape (1, C, 1, 1)
  torch::Tensor pixel_offset_;  // (0.5 - mean) / std
};
TORCH_MODULE(ConditionalGenerator);

// Validates (z, labels) against the generator's contract.
void check_generator_input(const ConditionalGeneratorImpl& g,
                           const torch::Tensor& z,
                           const torch::Tensor& labels);

// Deterministic forward: evaluation mode (CBN running statistics), the
// module's previous mode is restored afterwards.
torch::Tensor generator_forward(ConditionalGenerator g, const torch::Tensor& z,
                                const torch::Tensor& labels);

ConditionalGenerator clone_generator(ConditionalGenerator src);

}  // namespace dfq

#endif  // DFQ_GENERATOR_HPP_

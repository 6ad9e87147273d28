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

#include "dfq/generator.hpp"

#include "dfq/digest.hpp"
#include "dfq/error.hpp"

namespace F = torch::nn::functional;

namespace dfq {

ConditionalBatchNormImpl::ConditionalBatchNormImpl(int64_t features,
                                                   int64_t num_classes) {
  norm_ = register_module(
      "norm",
      torch::nn::BatchNorm2d(
          torch::nn::BatchNormOptions(features).affine(false)));
  gamma = register_parameter("gamma", torch::ones({num_classes, features}));
  beta = register_parameter("beta", torch::zeros({num_classes, features}));
}

torch::Tensor ConditionalBatchNormImpl::forward(const torch::Tensor& x,
                                                const torch::Tensor& labels) {
  auto n = norm_(x);
  auto scale = gamma.index_select(0, labels).unsqueeze(-1).unsqueeze(-1);
  auto shift = beta.index_select(0, labels).unsqueeze(-1).unsqueeze(-1);
  return n * scale + shift;
}

// ---------------------------------------------------------------------------

namespace {

int64_t block_count(const GeneratorSpec& s) {
  DFQ_CHECK(s.height == s.width, ErrorCode::kInvalidArgument,
            "generator output must be square");
  int64_t blocks = 0;
  int64_t size = 4;
  while (size < s.height) {
    size *= 2;
    ++blocks;
  }
  DFQ_CHECK(size == s.height && blocks >= 1, ErrorCode::kInvalidArgument,
            "generator output size must be 4 * 2^k with k >= 1, got " +
                std::to_string(s.height));
  return blocks;
}

}  // namespace

ConditionalGeneratorImpl::ConditionalGeneratorImpl(GeneratorSpec spec)
    : spec_(std::move(spec)) {
  DFQ_CHECK(spec_.noise_dim > 0 && spec_.num_classes > 0 &&
                spec_.channels > 0 && spec_.base_channels > 0,
            ErrorCode::kInvalidArgument,
            "generator dimensions must be positive");
  const int64_t blocks = block_count(spec_);
  int64_t ch = spec_.base_channels << blocks;
  project_ = register_module("project",
                             torch::nn::Linear(spec_.noise_dim, ch * 16));
  for (int64_t i = 0; i < blocks; ++i) {
    const int64_t out = ch / 2;
    auto suffix = std::to_string(i + 1);
    convs_.push_back(register_module(
        "conv" + suffix,
        torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, out, 3).padding(1))));
    cbn_.push_back(register_module(
        "cbn" + suffix, ConditionalBatchNorm(out, spec_.num_classes)));
    ch = out;
  }
  to_image_ = register_module(
      "to_image",
      torch::nn::Conv2d(
          torch::nn::Conv2dOptions(ch, spec_.channels, 3).padding(1)));

  auto& norm = spec_.normalization;
  if (norm.mean.empty()) norm.mean.assign(spec_.channels, 0.5);
  if (norm.stddev.empty()) norm.stddev.assign(spec_.channels, 0.5);
  DFQ_CHECK(static_cast<int64_t>(norm.mean.size()) == spec_.channels &&
                static_cast<int64_t>(norm.stddev.size()) == spec_.channels,
            ErrorCode::kInvalidArgument,
            "normalization must have one mean/std per channel");
  std::vector<float> scale, offset;
  for (int64_t c = 0; c < spec_.channels; ++c) {
    DFQ_CHECK(norm.stddev[c] > 0, ErrorCode::kInvalidArgument,
              "normalization std must be positive");
    scale.push_back(static_cast<float>(0.5 / norm.stddev[c]));
    offset.push_back(static_cast<float>((0.5 - norm.mean[c]) / norm.stddev[c]));
  }
  pixel_scale_ = register_buffer(
      "pixel_scale", torch::tensor(scale).view({1, spec_.channels, 1, 1}));
  pixel_offset_ = register_buffer(
      "pixel_offset", torch::tensor(offset).view({1, spec_.channels, 1, 1}));
}

torch::Tensor ConditionalGeneratorImpl::forward(const torch::Tensor& z,
                                                const torch::Tensor& labels) {
  check_generator_input(*this, z, labels);
  const int64_t b = z.size(0);
  auto h = project_(z).view({b, -1, 4, 4});
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = F::interpolate(h, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    h = torch::relu(cbn_[i]->forward(convs_[i](h), labels));
  }
  auto img = torch::tanh(to_image_(h));
  // pixel = (t + 1) / 2 ; x = (pixel - mean) / std
  return img * pixel_scale_ + pixel_offset_;
}

std::pair<torch::Tensor, torch::Tensor>
ConditionalGeneratorImpl::output_bounds() const {
  auto s = pixel_scale_.flatten();
  auto o = pixel_offset_.flatten();
  return {o - s, o + s};
}

void check_generator_input(const ConditionalGeneratorImpl& g,
                           const torch::Tensor& z,
                           const torch::Tensor& labels) {
  const auto& s = g.spec();
  DFQ_CHECK(z.dim() == 2 && z.size(1) == s.noise_dim, ErrorCode::kContract,
            "noise shape mismatch: expected (B, " +
                std::to_string(s.noise_dim) + "), got " +
                shape_string(z.sizes()));
  DFQ_CHECK(labels.dim() == 1 && labels.size(0) == z.size(0),
            ErrorCode::kContract,
            "labels must be a vector with one entry per noise row, got " +
                shape_string(labels.sizes()));
  DFQ_CHECK(labels.scalar_type() == torch::kLong, ErrorCode::kContract,
            "labels must be int64");
  if (labels.numel() > 0) {
    const auto lo = labels.min().item<int64_t>();
    const auto hi = labels.max().item<int64_t>();
    DFQ_CHECK(lo >= 0 && hi < s.num_classes, ErrorCode::kContract,
              "label out of range [0, " + std::to_string(s.num_classes) +
                  "): saw " + std::to_string(lo < 0 ? lo : hi));
  }
  DFQ_CHECK(torch::isfinite(z).all().item<bool>(), ErrorCode::kContract,
            "noise contains non-finite values");
}

torch::Tensor generator_forward(ConditionalGenerator g, const torch::Tensor& z,
                                const torch::Tensor& labels) {
  const bool was_training = g->is_training();
  g->eval();
  auto out = g->forward(z, labels);
  g->train(was_training);
  return out;
}

ConditionalGenerator clone_generator(ConditionalGenerator src) {
  ConditionalGenerator dst(src->spec());
  dst->to(src->parameters().front().scalar_type());
  copy_state(*src, *dst);
  dst->train(src->is_training());
  return dst;
}

}  // namespace dfq

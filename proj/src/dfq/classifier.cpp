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

#include "dfq/classifier.hpp"

#include <cmath>

#include "dfq/digest.hpp"
#include "dfq/error.hpp"

namespace F = torch::nn::functional;

namespace dfq {

ArchSpec arch_preset(const std::string& id, int64_t in_channels,
                     int64_t image_size, int64_t num_classes) {
  ArchSpec a;
  a.id = id;
  a.in_channels = in_channels;
  a.height = image_size;
  a.width = image_size;
  a.num_classes = num_classes;
  if (id == "mnist-bn-cnn") {
    a.family = "bn-cnn";
    a.widths = {16, 32, 32};
  } else if (id == "cifar-resnet8") {
    a.family = "resnet";
    a.widths = {16, 32, 64};
  } else {
    fail(ErrorCode::kInvalidArgument,
         "unknown architecture '" + id +
             "' (supported: mnist-bn-cnn, cifar-resnet8)");
  }
  return a;
}

// ---------------------------------------------------------------------------

ConvBnImpl::ConvBnImpl(std::string name, int64_t in, int64_t out,
                       int64_t kernel, int64_t stride, bool relu)
    : name_(std::move(name)),
      stride_(stride),
      padding_(kernel / 2),
      relu_(relu) {
  weight = register_parameter("weight",
                              torch::empty({out, in, kernel, kernel}));
  torch::nn::init::kaiming_normal_(weight, 0.0, torch::kFanOut,
                                   torch::kReLU);
  bn_ = register_module("bn", torch::nn::BatchNorm2d(out));
}

torch::Tensor ConvBnImpl::forward(const torch::Tensor& x,
                                  ForwardHooks& hooks) {
  auto w = hooks.weight(name_ + ".weight", weight);
  auto y = F::conv2d(x, w,
                     F::Conv2dFuncOptions().bias(bias).stride(stride_).padding(
                         padding_));
  if (!folded_) {
    hooks.bn_input(name_ + ".bn", y);
    y = hooks.activation(name_ + ".conv", y);
    y = bn_(y);
  }
  if (relu_) {
    y = hooks.activation(name_ + ".relu", torch::relu(y));
  }
  return y;
}

void ConvBnImpl::fold() {
  if (folded_) return;
  torch::NoGradGuard no_grad;
  const auto& opts = bn_->options;
  auto inv_std = torch::rsqrt(bn_->running_var + opts.eps());
  auto gamma = bn_->weight * inv_std;
  weight.mul_(gamma.view({-1, 1, 1, 1}));
  auto b = bn_->bias - bn_->running_mean * gamma;
  bias = register_parameter("bias", b.clone(), weight.requires_grad());
  folded_ = true;
}

// ---------------------------------------------------------------------------

BasicBlockImpl::BasicBlockImpl(std::string name, int64_t in, int64_t out,
                               int64_t stride)
    : name_(std::move(name)) {
  first = register_module("first",
                          ConvBn(name_ + ".a", in, out, 3, stride, true));
  second = register_module("second",
                           ConvBn(name_ + ".b", out, out, 3, 1, false));
  if (stride != 1 || in != out) {
    shortcut = register_module(
        "shortcut", ConvBn(name_ + ".down", in, out, 1, stride, false));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x,
                                      ForwardHooks& hooks) {
  auto y = second->forward(first->forward(x, hooks), hooks);
  auto skip = shortcut ? shortcut->forward(x, hooks) : x;
  return hooks.activation(name_ + ".out", torch::relu(y + skip));
}

// ---------------------------------------------------------------------------

ClassifierImpl::ClassifierImpl(ArchSpec arch) : arch_(std::move(arch)) {
  DFQ_CHECK(!arch_.widths.empty(), ErrorCode::kInvalidArgument,
            "architecture needs at least one stage width");
  DFQ_CHECK(arch_.num_classes > 0 && arch_.in_channels > 0,
            ErrorCode::kInvalidArgument,
            "architecture needs positive classes and channels");
  int64_t in = arch_.in_channels;
  if (arch_.family == "bn-cnn") {
    for (std::size_t i = 0; i < arch_.widths.size(); ++i) {
      auto name = "c" + std::to_string(i + 1);
      stages_.push_back(register_module(
          name, ConvBn(name, in, arch_.widths[i], 3, 1, true)));
      in = arch_.widths[i];
    }
  } else if (arch_.family == "resnet") {
    stem_ = register_module("stem",
                            ConvBn("stem", in, arch_.widths[0], 3, 1, true));
    in = arch_.widths[0];
    for (std::size_t i = 0; i < arch_.widths.size(); ++i) {
      auto name = "block" + std::to_string(i + 1);
      int64_t stride = i == 0 ? 1 : 2;
      blocks_.push_back(register_module(
          name, BasicBlock(name, in, arch_.widths[i], stride)));
      in = arch_.widths[i];
    }
  } else {
    fail(ErrorCode::kInvalidArgument,
         "unknown architecture family '" + arch_.family + "'");
  }
  fc_weight_ = register_parameter("fc_weight",
                                  torch::empty({arch_.num_classes, in}));
  fc_bias_ = register_parameter("fc_bias", torch::zeros({arch_.num_classes}));
  torch::nn::init::kaiming_uniform_(fc_weight_, std::sqrt(5.0));
}

void ClassifierImpl::check_input(const torch::Tensor& x) const {
  const bool ok = x.dim() == 4 && x.size(1) == arch_.in_channels &&
                  x.size(2) == arch_.height && x.size(3) == arch_.width;
  if (!ok) {
    fail(ErrorCode::kContract,
         "input shape mismatch: expected (B, " +
             std::to_string(arch_.in_channels) + ", " +
             std::to_string(arch_.height) + ", " +
             std::to_string(arch_.width) + "), got " +
             shape_string(x.sizes()));
  }
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& x) {
  ForwardHooks identity;
  return forward(x, identity);
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& x,
                                      ForwardHooks& hooks) {
  check_input(x);
  auto h = hooks.activation("input", x);
  if (arch_.family == "bn-cnn") {
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      h = stages_[i]->forward(h, hooks);
      if (i + 1 < stages_.size() && h.size(2) >= 2 && h.size(3) >= 2) {
        h = F::max_pool2d(h, F::MaxPool2dFuncOptions(2));
      }
    }
  } else {
    h = stem_->forward(h, hooks);
    for (auto& b : blocks_) h = b->forward(h, hooks);
  }
  h = hooks.activation("gap", h.mean({2, 3}));
  auto w = hooks.weight("fc.weight", fc_weight_);
  return hooks.activation("logits", F::linear(h, w, fc_bias_));
}

std::vector<ConvBn> ClassifierImpl::conv_units() const {
  std::vector<ConvBn> units;
  if (arch_.family == "bn-cnn") {
    units = stages_;
  } else {
    units.push_back(stem_);
    for (const auto& b : blocks_) {
      units.push_back(b->first);
      units.push_back(b->second);
      if (b->shortcut) units.push_back(b->shortcut);
    }
  }
  return units;
}

std::vector<std::string> ClassifierImpl::bn_layers() const {
  std::vector<std::string> ids;
  for (const auto& [id, bn] : bn_modules()) ids.push_back(id);
  return ids;
}

std::vector<std::pair<std::string, torch::nn::BatchNorm2d>>
ClassifierImpl::bn_modules() const {
  std::vector<std::pair<std::string, torch::nn::BatchNorm2d>> out;
  if (folded_) return out;
  for (const auto& u : conv_units()) out.emplace_back(u->name() + ".bn", u->bn());
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>>
ClassifierImpl::weight_sites() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& u : conv_units()) out.emplace_back(u->name() + ".weight", u->weight);
  out.emplace_back("fc.weight", fc_weight_);
  return out;
}

namespace {

class SiteRecorder : public ForwardHooks {
 public:
  torch::Tensor activation(const std::string& site,
                           const torch::Tensor& a) override {
    sites.push_back(site);
    return a;
  }
  std::vector<std::string> sites;
};

}  // namespace

std::vector<std::string> ClassifierImpl::activation_sites() {
  torch::NoGradGuard no_grad;
  const bool was_training = is_training();
  torch::nn::Module::train(false);
  SiteRecorder rec;
  auto probe = torch::zeros({1, arch_.in_channels, arch_.height, arch_.width},
                            fc_weight_.options());
  forward(probe, rec);
  torch::nn::Module::train(was_training);
  return rec.sites;
}

void ClassifierImpl::freeze() {
  for (auto& p : parameters()) p.requires_grad_(false);
  torch::nn::Module::train(false);
  frozen_ = true;
}

void ClassifierImpl::train(bool on) {
  torch::nn::Module::train(on && !frozen_);
}

void ClassifierImpl::fold_batch_norm() {
  for (auto& u : conv_units()) u->fold();
  folded_ = true;
}

// ---------------------------------------------------------------------------

void copy_state(const torch::nn::Module& src, torch::nn::Module& dst) {
  torch::NoGradGuard no_grad;
  auto src_params = src.named_parameters(true);
  auto dst_params = dst.named_parameters(true);
  DFQ_CHECK(src_params.size() == dst_params.size(), ErrorCode::kStructure,
            "copy_state: parameter count mismatch");
  for (const auto& p : src_params) {
    auto* d = dst_params.find(p.key());
    DFQ_CHECK(d != nullptr, ErrorCode::kStructure,
              "copy_state: missing parameter '" + p.key() + "'");
    d->copy_(p.value());
  }
  auto src_bufs = src.named_buffers(true);
  auto dst_bufs = dst.named_buffers(true);
  for (const auto& b : src_bufs) {
    auto* d = dst_bufs.find(b.key());
    DFQ_CHECK(d != nullptr, ErrorCode::kStructure,
              "copy_state: missing buffer '" + b.key() + "'");
    d->copy_(b.value());
  }
}

Classifier clone_classifier(Classifier src) {
  Classifier dst(src->arch());
  if (src->folded()) dst->fold_batch_norm();
  // Module::to(dtype) would also cast the integer batch counters.
  const auto dtype = src->parameters().front().scalar_type();
  {
    torch::NoGradGuard no_grad;
    for (auto& p : dst->parameters()) p.set_data(p.to(dtype));
    for (auto& b : dst->buffers()) {
      if (b.is_floating_point()) b.set_data(b.to(dtype));
    }
  }
  copy_state(*src, *dst);
  dst->train(src->is_training());
  return dst;
}

torch::Tensor teacher_forward(Classifier teacher, const torch::Tensor& batch) {
  DFQ_CHECK(teacher->frozen(), ErrorCode::kContract,
            "teacher_forward requires a frozen teacher");
  return teacher->forward(batch);
}

}  // namespace dfq

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

#include "doctest_torch.hpp"
#include "test_support.hpp"

#include "dfq/classifier.hpp"
#include "dfq/digest.hpp"
#include "dfq/generator.hpp"

using namespace dfq;
using testing::code;
using testing::error_code_of;

TEST_CASE("teacher_forward on zeros gives finite (1, K) logits") {
  for (const auto& arch :
       {arch_preset("mnist-bn-cnn", 1, 16, 10),
        arch_preset("cifar-resnet8", 3, 32, 10)}) {
    auto t = testing::random_teacher(arch);
    auto out = teacher_forward(t, torch::zeros({1, arch.in_channels,
                                                arch.height, arch.width}));
    CHECK(testing::shape(out) == "(1, 10)");
    CHECK(torch::isfinite(out).all().item<bool>());
  }
}

TEST_CASE("teacher_forward is bit-identical across calls") {
  auto t = testing::random_teacher(arch_preset("mnist-bn-cnn", 1, 16, 10));
  auto x = torch::randn({7, 1, 16, 16});
  auto a = teacher_forward(t, x);
  auto b = teacher_forward(t, x);
  CHECK(torch::equal(a, b));
}

TEST_CASE("shape mismatch names expected and actual shapes") {
  auto t = testing::random_teacher(arch_preset("mnist-bn-cnn", 1, 16, 10));
  auto msg = testing::error_message_of(
      [&] { teacher_forward(t, torch::zeros({2, 3, 16, 16})); });
  CHECK(msg.find("expected") != std::string::npos);
  CHECK(msg.find("(2, 3, 16, 16)") != std::string::npos);
  CHECK(error_code_of([&] { teacher_forward(t, torch::zeros({2, 1, 8, 8})); }) ==
        code(ErrorCode::kContract));
}

TEST_CASE("teacher_forward rejects an unfrozen model") {
  auto t = testing::random_teacher(arch_preset("mnist-bn-cnn", 1, 16, 10), 0,
                                   false);
  CHECK(error_code_of([&] { teacher_forward(t, torch::zeros({1, 1, 16, 16})); }) ==
        code(ErrorCode::kContract));
}

TEST_CASE("unknown architecture preset") {
  CHECK(error_code_of([] { arch_preset("vgg", 3, 32, 10); }) ==
        code(ErrorCode::kInvalidArgument));
}

TEST_CASE("frozen teacher ignores train() and has no trainable parameters") {
  auto t = testing::random_teacher(arch_preset("mnist-bn-cnn", 1, 16, 10));
  t->train();
  CHECK_FALSE(t->is_training());
  for (const auto& p : t->parameters()) CHECK_FALSE(p.requires_grad());
}

TEST_CASE("gradients still reach the input of a frozen teacher") {
  auto t = testing::random_teacher(arch_preset("mnist-bn-cnn", 1, 16, 10));
  auto x = torch::randn({2, 1, 16, 16}).requires_grad_();
  teacher_forward(t, x).sum().backward();
  REQUIRE(x.grad().defined());
  CHECK(x.grad().abs().sum().item<double>() > 0);
}

TEST_CASE("batch norm folding preserves evaluation logits") {
  for (const auto& arch :
       {arch_preset("mnist-bn-cnn", 1, 16, 10),
        arch_preset("cifar-resnet8", 3, 32, 10)}) {
    auto t = testing::random_teacher(arch);
    auto x = torch::randn({4, arch.in_channels, arch.height, arch.width});
    auto ref = teacher_forward(t, x);
    auto folded = clone_classifier(t);
    folded->fold_batch_norm();
    folded->freeze();
    CHECK(folded->bn_layers().empty());
    auto out = teacher_forward(folded, x);
    CHECK(torch::allclose(out, ref, 1e-4, 1e-4));
  }
}

TEST_CASE("clone_classifier copies state exactly and keeps dtypes") {
  auto t = testing::random_teacher(arch_preset("mnist-bn-cnn", 1, 16, 10));
  auto c = clone_classifier(t);
  CHECK(state_digest(*c) == state_digest(*t));
  for (const auto& b : c->named_buffers()) {
    if (b.key().find("num_batches_tracked") != std::string::npos)
      CHECK((b.value().scalar_type() == torch::kLong));
  }
  torch::NoGradGuard g;
  c->parameters().front().add_(1.0);
  CHECK(state_digest(*c) != state_digest(*t));
}

TEST_CASE("architecture graphs expose sites in forward order") {
  auto t = testing::random_teacher(arch_preset("mnist-bn-cnn", 1, 16, 10));
  auto layers = t->bn_layers();
  REQUIRE(layers.size() == 3);
  CHECK(layers[0] == "c1.bn");
  auto w = t->weight_sites();
  REQUIRE(w.size() == 4);
  CHECK(w.front().first == "c1.weight");
  auto a = t->activation_sites();
  REQUIRE(a.size() >= 2);
  CHECK(a.front() == "input");
  CHECK(a.back() == "logits");
}

// ---- conditional generator -------------------------------------------------

namespace {

ConditionalGenerator distinct_rows_generator(const GeneratorSpec& spec) {
  torch::manual_seed(3);
  ConditionalGenerator g(spec);
  torch::NoGradGuard no_grad;
  for (auto& cbn : g->cbn_layers()) {
    cbn->gamma.copy_(1.0 + 0.5 * torch::randn_like(cbn->gamma));
    cbn->beta.copy_(0.5 * torch::randn_like(cbn->beta));
  }
  g->eval();
  return g;
}

}  // namespace

TEST_CASE("labels route through conditional batch norm") {
  auto spec = testing::small_generator_spec(
      testing::small_arch({4, 6}, 16, 10), 8, 8);
  auto g = distinct_rows_generator(spec);
  auto z = torch::randn({1, 8});
  auto a = generator_forward(g, z, torch::tensor({0}, torch::kLong));
  auto b = generator_forward(g, z, torch::tensor({1}, torch::kLong));
  CHECK_FALSE(torch::equal(a, b));
}

TEST_CASE("generator output stays inside the declared bounds") {
  auto spec = testing::small_generator_spec(
      testing::small_arch({4, 6}, 16, 10), 8, 8);
  auto g = distinct_rows_generator(spec);
  {
    torch::NoGradGuard no_grad;
    for (auto& p : g->parameters()) p.mul_(20.0);  // push tanh into saturation
  }
  auto [lo, hi] = g->output_bounds();
  auto out = generator_forward(g, 5 * torch::randn({64, 8}),
                               torch::randint(0, 10, {64}, torch::kLong));
  CHECK(out.min().item<double>() >= lo.min().item<double>());
  CHECK(out.max().item<double>() <= hi.max().item<double>());
  CHECK(lo.item<double>() == doctest::Approx(-0.1307 / 0.3081).epsilon(1e-6));
  CHECK(hi.item<double>() == doctest::Approx(0.8693 / 0.3081).epsilon(1e-6));
}

TEST_CASE("generator forward is deterministic and shaped like the input") {
  auto spec = testing::small_generator_spec(
      testing::small_arch({4, 6}, 16, 10), 8, 8);
  auto g = distinct_rows_generator(spec);
  auto z = torch::randn({5, 8});
  auto y = torch::tensor({0, 3, 9, 2, 2}, torch::kLong);
  auto a = generator_forward(g, z, y);
  auto b = generator_forward(g, z, y);
  CHECK(torch::equal(a, b));
  CHECK(testing::shape(a) == "(5, 1, 16, 16)");
}

TEST_CASE("generator forward restores training mode") {
  auto spec = testing::small_generator_spec(
      testing::small_arch({4, 6}, 16, 10), 8, 8);
  ConditionalGenerator g(spec);
  g->train();
  generator_forward(g, torch::randn({2, 8}), torch::tensor({0, 1}, torch::kLong));
  CHECK(g->is_training());
}

TEST_CASE("generator input contract") {
  auto spec = testing::small_generator_spec(
      testing::small_arch({4, 6}, 16, 10), 8, 8);
  ConditionalGenerator g(spec);
  auto z = torch::randn({2, 8});
  CHECK(error_code_of([&] {
          generator_forward(g, z, torch::tensor({0, 10}, torch::kLong));
        }) == code(ErrorCode::kContract));
  CHECK(error_code_of([&] {
          generator_forward(g, z, torch::tensor({-1, 0}, torch::kLong));
        }) == code(ErrorCode::kContract));
  CHECK(error_code_of([&] {
          generator_forward(g, torch::randn({2, 7}),
                            torch::tensor({0, 1}, torch::kLong));
        }) == code(ErrorCode::kContract));
}

TEST_CASE("conditional batch norm with shared rows matches plain batch norm") {
  ConditionalBatchNorm cbn(3, 4);
  torch::nn::BatchNorm2d bn(torch::nn::BatchNorm2dOptions(3));
  {
    torch::NoGradGuard no_grad;
    auto gamma = torch::tensor({1.5, 0.5, 2.0});
    auto beta = torch::tensor({0.1, -0.2, 0.3});
    cbn->gamma.copy_(gamma.expand({4, 3}));
    cbn->beta.copy_(beta.expand({4, 3}));
    bn->weight.copy_(gamma);
    bn->bias.copy_(beta);
  }
  auto x = torch::randn({6, 3, 5, 5});
  auto y = torch::tensor({0, 1, 2, 3, 0, 1}, torch::kLong);
  CHECK(torch::allclose(cbn->forward(x, y), bn->forward(x), 1e-5, 1e-6));
}

TEST_CASE("conditional batch norm selects the row of each label") {
  ConditionalBatchNorm cbn(2, 3);
  {
    torch::NoGradGuard no_grad;
    cbn->gamma.copy_(torch::tensor({{1.0, 1.0}, {2.0, 3.0}, {0.5, 4.0}}));
    cbn->beta.copy_(torch::tensor({{0.0, 0.0}, {1.0, -1.0}, {2.0, 5.0}}));
  }
  cbn->eval();  // running stats (0, 1): normalization is the identity
  auto x = torch::randn({3, 2, 2, 2});
  auto y = torch::tensor({2, 0, 1}, torch::kLong);
  auto out = cbn->forward(x, y);
  const double eps = 1e-5;
  auto expect = x / std::sqrt(1 + eps);
  auto g = torch::tensor({{0.5, 4.0}, {1.0, 1.0}, {2.0, 3.0}}).view({3, 2, 1, 1});
  auto b = torch::tensor({{2.0, 5.0}, {0.0, 0.0}, {1.0, -1.0}}).view({3, 2, 1, 1});
  CHECK(torch::allclose(out, expect * g + b, 1e-5, 1e-6));
}

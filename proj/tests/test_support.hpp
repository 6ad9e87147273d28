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

#ifndef DFQ_TESTS_TEST_SUPPORT_HPP_
#define DFQ_TESTS_TEST_SUPPORT_HPP_

#include <torch/torch.h>

#include <array>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "dfq/classifier.hpp"
#include "dfq/data.hpp"
#include "dfq/digest.hpp"
#include "dfq/error.hpp"
#include "dfq/generator.hpp"
#include "oracle_values.hpp"

namespace testing {

namespace fs = std::filesystem;

// Runs `fn` and returns the dfq error code it threw (or 0 if none).
template <typename Fn>
int error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const dfq::Error& e) {
    return static_cast<int>(e.code());
  }
  return 0;
}

template <typename Fn>
std::string error_message_of(Fn&& fn) {
  try {
    fn();
  } catch (const dfq::Error& e) {
    return e.what();
  }
  return {};
}

inline int code(dfq::ErrorCode c) { return static_cast<int>(c); }

inline std::string shape(const torch::Tensor& t) {
  return dfq::shape_string(t.sizes());
}

// Casts floating parameters and buffers only; batch counters stay int64.
inline void to_dtype(torch::nn::Module& m, torch::Dtype dtype) {
  torch::NoGradGuard no_grad;
  for (auto& p : m.parameters()) p.set_data(p.to(dtype));
  for (auto& b : m.buffers()) {
    if (b.is_floating_point()) b.set_data(b.to(dtype));
  }
}

inline dfq::ArchSpec small_arch(std::vector<int64_t> widths = {4, 6},
                                int64_t size = 8, int64_t classes = 5,
                                int64_t channels = 1) {
  dfq::ArchSpec a;
  a.id = "mnist-bn-cnn";
  a.family = "bn-cnn";
  a.in_channels = channels;
  a.height = size;
  a.width = size;
  a.num_classes = classes;
  a.widths = std::move(widths);
  return a;
}

// Untrained classifier whose BN running statistics and affine parameters
// are randomized so that every layer carries a distinct reference.
inline dfq::Classifier random_teacher(const dfq::ArchSpec& arch,
                                      uint64_t seed = 0,
                                      bool freeze = true) {
  torch::manual_seed(seed);
  dfq::Classifier t(arch);
  torch::NoGradGuard no_grad;
  for (auto& [name, bn] : t->bn_modules()) {
    const auto c = bn->running_mean.size(0);
    bn->running_mean.copy_(0.3 * torch::randn({c}));
    bn->running_var.copy_(0.5 + torch::rand({c}));
    bn->weight.copy_(0.8 + 0.4 * torch::rand({c}));
    bn->bias.copy_(0.1 * torch::randn({c}));
  }
  if (freeze) t->freeze();
  return t;
}

inline dfq::GeneratorSpec small_generator_spec(const dfq::ArchSpec& arch,
                                               int64_t noise_dim = 6,
                                               int64_t base = 4) {
  dfq::GeneratorSpec s;
  s.noise_dim = noise_dim;
  s.num_classes = arch.num_classes;
  s.channels = arch.in_channels;
  s.height = arch.height;
  s.width = arch.width;
  s.base_channels = base;
  s.normalization = {{0.1307}, {0.3081}};
  return s;
}

inline torch::Tensor logits_tensor(
    const std::array<std::array<double, 5>, 4>& rows) {
  auto t = torch::empty({4, 5}, torch::kDouble);
  auto a = t.accessor<double, 2>();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) a[i][j] = rows[i][j];
  return t;
}

inline torch::Tensor oracle_labels() {
  return torch::tensor(std::vector<int64_t>(oracle::kLabels.begin(),
                                            oracle::kLabels.end()),
                       torch::kLong);
}

// Fresh directory under the build tree's temp area.
inline fs::path scratch_dir(const std::string& name) {
  auto base = fs::temp_directory_path() / "dfq-tests";
  auto dir = base / (name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline bool desk_data_available() {
  const auto root = dfq::resolve_data_dir("");
  return fs::exists(fs::path(root) / "mnist-subset" / "train-images-idx3-ubyte");
}

}  // namespace testing

#endif  // DFQ_TESTS_TEST_SUPPORT_HPP_

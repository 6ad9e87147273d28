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

#ifndef DFQ_CONFIG_HPP_
#define DFQ_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dfq/distill.hpp"
#include "dfq/teacher.hpp"
#include "dfq/zscgan.hpp"

namespace dfq {

struct GeneratorShape {
  int64_t noise_dim = 128;
  int64_t base_channels = 16;
};

struct CalibrationConfig {
  int64_t samples = 10000;
  int64_t batch_size = 500;
  bool keep_io_8bit = false;
  bool fold_bn = false;
};

// Everything a plan needs: dataset, teacher recipe, generator and KD
// schedules, calibration and seeds.
struct TrainConfig {
  std::string profile = "mnist-desk";
  TeacherConfig teacher;
  ZsCganConfig generator;
  GeneratorShape generator_shape;
  KDConfig kd;
  CalibrationConfig calibration;
  std::vector<uint64_t> seeds{0, 1, 2};

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  // SHA-256 of the canonical JSON.
  std::string digest() const;
  void validate() const;
};

// "mnist-desk", "cifar-desk", "cifar-full".
TrainConfig profile_config(const std::string& name);
std::vector<std::string> profile_names();

// Maps the short generator/KD profile names to a full profile for a
// dataset: "desk" -> mnist-desk or cifar-desk, "full" -> cifar-full.
TrainConfig resolve_profile(const std::string& name,
                            const std::string& dataset);

}  // namespace dfq

#endif  // DFQ_CONFIG_HPP_

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

#include "dfq/config.hpp"

#include "dfq/digest.hpp"
#include "dfq/error.hpp"
#include "json.hpp"

namespace dfq {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string TrainConfig::to_json() const {
  json j;
  j["profile"] = profile;
  j["teacher"] = {{"arch", teacher.arch},
                  {"dataset", teacher.dataset},
                  {"image_size", teacher.image_size},
                  {"epochs", teacher.epochs},
                  {"batch_size", teacher.batch_size},
                  {"lr", teacher.lr},
                  {"momentum", teacher.momentum},
                  {"weight_decay", teacher.weight_decay},
                  {"max_shift", teacher.max_shift},
                  {"seed", teacher.seed}};
  j["generator"] = {{"epochs", generator.epochs},
                    {"batches_per_epoch", generator.batches_per_epoch},
                    {"batch_size", generator.batch_size},
                    {"lr", generator.lr},
                    {"beta1", generator.beta1},
                    {"beta2", generator.beta2},
                    {"bns_weight", generator.bns_weight},
                    {"noise_dim", generator_shape.noise_dim},
                    {"base_channels", generator_shape.base_channels}};
  j["kd"] = {{"epochs", kd.epochs},
             {"batches_per_epoch", kd.batches_per_epoch},
             {"batch_size", kd.batch_size},
             {"lr", kd.lr},
             {"momentum", kd.momentum},
             {"temperature", kd.temperature},
             {"continue_generator_updates", kd.continue_generator_updates}};
  j["calibration"] = {{"samples", calibration.samples},
                      {"batch_size", calibration.batch_size},
                      {"keep_io_8bit", calibration.keep_io_8bit},
                      {"fold_bn", calibration.fold_bn}};
  j["seeds"] = seeds;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument,
         std::string("malformed config JSON: ") + e.what());
  }
  TrainConfig c;
  try {
    read(j, "profile", c.profile);
    if (j.contains("base_profile")) {
      c = profile_config(j.at("base_profile").get<std::string>());
    }
    if (j.contains("teacher")) {
      const auto& t = j.at("teacher");
      read(t, "arch", c.teacher.arch);
      read(t, "dataset", c.teacher.dataset);
      read(t, "image_size", c.teacher.image_size);
      read(t, "epochs", c.teacher.epochs);
      read(t, "batch_size", c.teacher.batch_size);
      read(t, "lr", c.teacher.lr);
      read(t, "momentum", c.teacher.momentum);
      read(t, "weight_decay", c.teacher.weight_decay);
      read(t, "max_shift", c.teacher.max_shift);
      read(t, "seed", c.teacher.seed);
    }
    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      read(g, "epochs", c.generator.epochs);
      read(g, "batches_per_epoch", c.generator.batches_per_epoch);
      read(g, "batch_size", c.generator.batch_size);
      read(g, "lr", c.generator.lr);
      read(g, "beta1", c.generator.beta1);
      read(g, "beta2", c.generator.beta2);
      read(g, "bns_weight", c.generator.bns_weight);
      read(g, "noise_dim", c.generator_shape.noise_dim);
      read(g, "base_channels", c.generator_shape.base_channels);
    }
    if (j.contains("kd")) {
      const auto& k = j.at("kd");
      read(k, "epochs", c.kd.epochs);
      read(k, "batches_per_epoch", c.kd.batches_per_epoch);
      read(k, "batch_size", c.kd.batch_size);
      read(k, "lr", c.kd.lr);
      read(k, "momentum", c.kd.momentum);
      read(k, "temperature", c.kd.temperature);
      read(k, "continue_generator_updates", c.kd.continue_generator_updates);
    }
    if (j.contains("calibration")) {
      const auto& q = j.at("calibration");
      read(q, "samples", c.calibration.samples);
      read(q, "batch_size", c.calibration.batch_size);
      read(q, "keep_io_8bit", c.calibration.keep_io_8bit);
      read(q, "fold_bn", c.calibration.fold_bn);
    }
    read(j, "seeds", c.seeds);
    read(j, "profile", c.profile);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument,
         std::string("invalid config field: ") + e.what());
  }
  c.validate();
  return c;
}

std::string TrainConfig::digest() const { return sha256_hex(to_json()); }

void TrainConfig::validate() const {
  dataset_info(teacher.dataset);
  arch_preset(teacher.arch, 1, teacher.image_size, 10);
  DFQ_CHECK(teacher.image_size >= 8 && (teacher.image_size & 3) == 0,
            ErrorCode::kInvalidArgument,
            "image_size must be a multiple of 4 and at least 8");
  generator.validate();
  kd.validate();
  DFQ_CHECK(calibration.samples > 0 && calibration.batch_size > 0,
            ErrorCode::kInvalidArgument, "calibration needs samples > 0");
  DFQ_CHECK(!seeds.empty(), ErrorCode::kInvalidArgument,
            "at least one seed is required");
  DFQ_CHECK(generator_shape.noise_dim > 0 && generator_shape.base_channels > 0,
            ErrorCode::kInvalidArgument, "invalid generator shape");
}

TrainConfig profile_config(const std::string& name) {
  TrainConfig c;
  c.profile = name;
  if (name == "mnist-desk") {
    c.teacher.arch = "mnist-bn-cnn";
    c.teacher.dataset = "mnist-subset";
    c.teacher.image_size = 16;
    c.teacher.epochs = 20;
    c.teacher.batch_size = 64;
    c.teacher.lr = 0.05;
    c.teacher.max_shift = 1;
    c.generator.epochs = 10;
    c.generator.batches_per_epoch = 100;
    c.generator.batch_size = 128;
    c.kd.epochs = 3;
    c.kd.batches_per_epoch = 100;
    c.kd.batch_size = 64;
    c.seeds = {0, 1, 2};
    return c;
  }
  c.teacher.arch = "cifar-resnet8";
  c.teacher.dataset = "cifar10";
  c.teacher.image_size = 32;
  c.teacher.epochs = 60;
  c.teacher.batch_size = 128;
  c.teacher.lr = 0.1;
  c.teacher.max_shift = 4;
  c.generator.batch_size = 128;
  c.kd.batch_size = 128;
  if (name == "cifar-desk") {
    c.generator.epochs = 60;
    c.generator.batches_per_epoch = 200;
    c.kd.epochs = 30;
    c.kd.batches_per_epoch = 200;
    return c;
  }
  if (name == "cifar-full") {
    c.generator.epochs = 200;
    c.generator.batches_per_epoch = 1000;
    c.kd.epochs = 50;
    c.kd.batches_per_epoch = 1000;
    return c;
  }
  fail(ErrorCode::kInvalidArgument,
       "unknown profile '" + name + "' (supported: mnist-desk, cifar-desk, cifar-full)");
}

std::vector<std::string> profile_names() {
  return {"mnist-desk", "cifar-desk", "cifar-full"};
}

TrainConfig resolve_profile(const std::string& name,
                            const std::string& dataset) {
  if (name == "desk") {
    return profile_config(dataset.rfind("mnist", 0) == 0 ? "mnist-desk"
                                                         : "cifar-desk");
  }
  if (name == "full") return profile_config("cifar-full");
  return profile_config(name);
}

}  // namespace dfq

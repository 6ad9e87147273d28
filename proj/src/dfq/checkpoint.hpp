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

#ifndef DFQ_CHECKPOINT_HPP_
#define DFQ_CHECKPOINT_HPP_

#include <torch/torch.h>

#include <optional>
#include <string>

#include "dfq/classifier.hpp"
#include "dfq/generator.hpp"
#include "dfq/quant.hpp"
#include "dfq/zscgan.hpp"

namespace dfq {

// Every checkpoint is `<path>` (serialized tensors) plus `<path>.json`.

struct TeacherManifest {
  ArchSpec arch;
  std::string dataset;
  Normalization normalization;
  double accuracy = 0;
  std::string parameter_digest;
};

struct GeneratorManifest {
  GeneratorSpec spec;
  ZsCganConfig config;
  std::string teacher_digest;
  double fidelity = 0;
  std::string parameter_digest;
};

struct StudentManifest {
  ArchSpec arch;
  StudentOptions options;
  std::string dataset;
  std::string method;  // DF-PTQ, DF-QAT, DD-PTQ, DD-QAT
  int bits = 8;
  double accuracy = 0;
  std::string teacher_digest;
  std::string parameter_digest;
};

std::string manifest_path(const std::string& path);

// Fills in the parameter digest before writing.
void save_teacher(const std::string& path, Classifier model,
                  TeacherManifest manifest);
// Verifies the stored digest; the returned model is frozen.
std::pair<Classifier, TeacherManifest> load_teacher(const std::string& path);

// Adam state is written to `<path>.adam` when an optimizer is given.
void save_generator(const std::string& path, ConditionalGenerator g,
                    GeneratorManifest manifest,
                    torch::optim::Adam* optimizer = nullptr);
std::pair<ConditionalGenerator, GeneratorManifest> load_generator(
    const std::string& path);
// Restores saved Adam state into `optimizer` if present; returns whether
// anything was loaded.
bool load_generator_optimizer(const std::string& path,
                              torch::optim::Adam& optimizer);

// Writes weights, manifest and `<path>.spec.json`.
void save_student(const std::string& path, StudentModel& student,
                  StudentManifest manifest);
std::pair<StudentModel, StudentManifest> load_student(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace dfq

#endif  // DFQ_CHECKPOINT_HPP_

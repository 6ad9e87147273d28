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

#include "dfq/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dfq/digest.hpp"
#include "dfq/error.hpp"
#include "json.hpp"

namespace dfq {

using nlohmann::json;
namespace fs = std::filesystem;

std::string manifest_path(const std::string& path) { return path + ".json"; }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DFQ_CHECK(in.good(), ErrorCode::kIo, "cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    DFQ_CHECK(out.good(), ErrorCode::kIo, "cannot write " + path);
    out << text;
    out.flush();
    DFQ_CHECK(out.good(), ErrorCode::kIo, "write failed for " + path);
  }
  fs::rename(tmp, path);
}

namespace {

json norm_json(const Normalization& n) {
  return {{"mean", n.mean}, {"std", n.stddev}};
}

Normalization norm_from(const json& j) {
  return {j.at("mean").get<std::vector<double>>(),
          j.at("std").get<std::vector<double>>()};
}

json arch_json(const ArchSpec& a) {
  return {{"architecture", a.id},
          {"family", a.family},
          {"num_classes", a.num_classes},
          {"input_shape", {a.in_channels, a.height, a.width}},
          {"widths", a.widths}};
}

ArchSpec arch_from(const json& j) {
  auto shape = j.at("input_shape").get<std::vector<int64_t>>();
  DFQ_CHECK(shape.size() == 3, ErrorCode::kIo, "bad input_shape in manifest");
  auto a = arch_preset(j.at("architecture").get<std::string>(), shape[0],
                       shape[1], j.at("num_classes").get<int64_t>());
  a.width = shape[2];
  if (j.contains("widths")) a.widths = j.at("widths").get<std::vector<int64_t>>();
  return a;
}

json read_manifest(const std::string& path, const std::string& kind) {
  json j;
  try {
    j = json::parse(read_text_file(manifest_path(path)));
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, "malformed manifest " + manifest_path(path) + ": " +
                             e.what());
  }
  DFQ_CHECK(j.value("kind", "") == kind, ErrorCode::kIo,
            path + " is not a " + kind + " checkpoint");
  return j;
}

template <typename Holder>
void save_module(const std::string& path, Holder m) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  try {
    torch::save(m, path);
  } catch (const c10::Error& e) {
    fail(ErrorCode::kIo, "cannot save " + path + ": " + e.what_without_backtrace());
  }
}

template <typename Holder>
void load_module(const std::string& path, Holder& m) {
  DFQ_CHECK(fs::exists(path), ErrorCode::kIo, "checkpoint not found: " + path);
  try {
    torch::load(m, path);
  } catch (const c10::Error& e) {
    fail(ErrorCode::kIo, "cannot load " + path + ": " + e.what_without_backtrace());
  }
}

void check_digest(const std::string& path, const torch::nn::Module& m,
                  const std::string& expected) {
  const auto actual = state_digest(m);
  DFQ_CHECK(actual == expected, ErrorCode::kIo,
            "parameter digest mismatch for " + path + ": expected " +
                expected + ", actual " + actual);
}

json zscgan_json(const ZsCganConfig& c) {
  return {{"epochs", c.epochs},         {"batches_per_epoch", c.batches_per_epoch},
          {"batch_size", c.batch_size}, {"lr", c.lr},
          {"beta1", c.beta1},           {"beta2", c.beta2},
          {"loss_mode", loss_mode_name(c.loss_mode)},
          {"bns_weight", c.bns_weight}, {"seed", c.seed}};
}

ZsCganConfig zscgan_from(const json& j) {
  ZsCganConfig c;
  c.epochs = j.at("epochs");
  c.batches_per_epoch = j.at("batches_per_epoch");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.loss_mode = parse_loss_mode(j.at("loss_mode"));
  c.bns_weight = j.at("bns_weight");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

void save_teacher(const std::string& path, Classifier model,
                  TeacherManifest manifest) {
  DFQ_CHECK(!model->folded(), ErrorCode::kInvalidArgument,
            "teacher checkpoints hold unfolded models");
  manifest.parameter_digest = state_digest(*model);
  save_module(path, model);
  json j = arch_json(manifest.arch);
  j["kind"] = "teacher";
  j["dataset"] = manifest.dataset;
  j["normalization"] = norm_json(manifest.normalization);
  j["accuracy"] = manifest.accuracy;
  j["parameter_digest"] = manifest.parameter_digest;
  write_text_file(manifest_path(path), j.dump(2) + "\n");
}

std::pair<Classifier, TeacherManifest> load_teacher(const std::string& path) {
  auto j = read_manifest(path, "teacher");
  TeacherManifest m;
  try {
    m.arch = arch_from(j);
    m.dataset = j.at("dataset");
    m.normalization = norm_from(j.at("normalization"));
    m.accuracy = j.at("accuracy");
    m.parameter_digest = j.at("parameter_digest");
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, "incomplete teacher manifest: " + std::string(e.what()));
  }
  Classifier model(m.arch);
  load_module(path, model);
  check_digest(path, *model, m.parameter_digest);
  model->freeze();
  return {model, m};
}

void save_generator(const std::string& path, ConditionalGenerator g,
                    GeneratorManifest manifest,
                    torch::optim::Adam* optimizer) {
  manifest.parameter_digest = state_digest(*g);
  save_module(path, g);
  if (optimizer != nullptr) {
    try {
      torch::save(*optimizer, path + ".adam");
    } catch (const c10::Error& e) {
      fail(ErrorCode::kIo, std::string("cannot save optimizer state: ") +
                               e.what_without_backtrace());
    }
  }
  const auto& s = manifest.spec;
  json j = {{"kind", "generator"},
            {"noise_dim", s.noise_dim},
            {"num_classes", s.num_classes},
            {"output_shape", {s.channels, s.height, s.width}},
            {"base_channels", s.base_channels},
            {"normalization", norm_json(s.normalization)},
            {"config", zscgan_json(manifest.config)},
            {"teacher_digest", manifest.teacher_digest},
            {"fidelity", manifest.fidelity},
            {"parameter_digest", manifest.parameter_digest}};
  write_text_file(manifest_path(path), j.dump(2) + "\n");
}

std::pair<ConditionalGenerator, GeneratorManifest> load_generator(
    const std::string& path) {
  auto j = read_manifest(path, "generator");
  GeneratorManifest m;
  try {
    auto shape = j.at("output_shape").get<std::vector<int64_t>>();
    DFQ_CHECK(shape.size() == 3, ErrorCode::kIo, "bad output_shape");
    m.spec.noise_dim = j.at("noise_dim");
    m.spec.num_classes = j.at("num_classes");
    m.spec.channels = shape[0];
    m.spec.height = shape[1];
    m.spec.width = shape[2];
    m.spec.base_channels = j.at("base_channels");
    m.spec.normalization = norm_from(j.at("normalization"));
    m.config = zscgan_from(j.at("config"));
    m.teacher_digest = j.at("teacher_digest");
    m.fidelity = j.at("fidelity");
    m.parameter_digest = j.at("parameter_digest");
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo,
         "incomplete generator manifest: " + std::string(e.what()));
  }
  ConditionalGenerator g(m.spec);
  load_module(path, g);
  check_digest(path, *g, m.parameter_digest);
  g->eval();
  return {g, m};
}

bool load_generator_optimizer(const std::string& path,
                              torch::optim::Adam& optimizer) {
  const auto file = path + ".adam";
  if (!fs::exists(file)) return false;
  try {
    torch::load(optimizer, file);
  } catch (const c10::Error& e) {
    fail(ErrorCode::kIo, std::string("cannot load optimizer state: ") +
                             e.what_without_backtrace());
  }
  return true;
}

void save_student(const std::string& path, StudentModel& student,
                  StudentManifest manifest) {
  manifest.parameter_digest = state_digest(*student.net());
  manifest.options = student.options();
  save_module(path, student.net());
  write_text_file(path + ".spec.json", student.spec().to_json());
  json j = arch_json(manifest.arch);
  j["kind"] = "student";
  j["dataset"] = manifest.dataset;
  j["method"] = manifest.method;
  j["bits"] = manifest.bits;
  j["accuracy"] = manifest.accuracy;
  j["bypass"] = manifest.options.bypass;
  j["fold_bn"] = manifest.options.fold_bn;
  j["ema_decay"] = manifest.options.ema_decay;
  j["teacher_digest"] = manifest.teacher_digest;
  j["parameter_digest"] = manifest.parameter_digest;
  j["spec"] = fs::path(path + ".spec.json").filename().string();
  write_text_file(manifest_path(path), j.dump(2) + "\n");
}

std::pair<StudentModel, StudentManifest> load_student(const std::string& path) {
  auto j = read_manifest(path, "student");
  StudentManifest m;
  try {
    m.arch = arch_from(j);
    m.dataset = j.at("dataset");
    m.method = j.at("method");
    m.bits = j.at("bits");
    m.accuracy = j.at("accuracy");
    m.options.bypass = j.at("bypass");
    m.options.fold_bn = j.at("fold_bn");
    m.options.ema_decay = j.at("ema_decay");
    m.teacher_digest = j.at("teacher_digest");
    m.parameter_digest = j.at("parameter_digest");
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, "incomplete student manifest: " + std::string(e.what()));
  }
  Classifier net(m.arch);
  if (m.options.fold_bn) net->fold_batch_norm();
  load_module(path, net);
  check_digest(path, *net, m.parameter_digest);
  auto spec = QuantizedModelSpec::from_json(read_text_file(path + ".spec.json"));
  StudentModel student(net, std::move(spec), m.options);
  student.eval();
  return {std::move(student), m};
}

}  // namespace dfq

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

#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dfq/bn_stats.hpp"
#include "dfq/checkpoint.hpp"
#include "dfq/config.hpp"
#include "dfq/data.hpp"
#include "dfq/distill.hpp"
#include "dfq/grid.hpp"
#include "dfq/plan.hpp"
#include "dfq/teacher.hpp"
#include "json.hpp"

using namespace dfq;
using testing::code;
using testing::error_code_of;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

const LabeledImages& desk_split(Split s) {
  static std::map<int, LabeledImages> cache;
  auto it = cache.find(static_cast<int>(s));
  if (it == cache.end()) {
    it = cache.emplace(static_cast<int>(s),
                       ingest_dataset("mnist-subset", s, {"", 16})).first;
  }
  return it->second;
}

TeacherConfig quick_teacher_cfg() {
  TeacherConfig c = profile_config("mnist-desk").teacher;
  c.epochs = 3;
  return c;
}

// Short-schedule desk teacher shared by the tests below, saved once.
const TrainedTeacher& quick_teacher() {
  static TrainedTeacher t = build_desk_teacher(
      quick_teacher_cfg(), desk_split(Split::kTrain), desk_split(Split::kTest));
  return t;
}

std::string quick_teacher_path() {
  static std::string path = [] {
    auto dir = testing::scratch_dir("pipeline-teacher");
    TeacherManifest m;
    m.arch = quick_teacher().model->arch();
    m.dataset = "mnist-subset";
    m.normalization = desk_split(Split::kTrain).info.normalization;
    m.accuracy = quick_teacher().accuracy;
    auto p = (dir / "teacher.pt").string();
    save_teacher(p, quick_teacher().model, m);
    return p;
  }();
  return path;
}

}  // namespace

// ---- data ------------------------------------------------------------------

TEST_CASE("desk dataset ingests with published counts") {
  REQUIRE(testing::desk_data_available());
  const auto& train = desk_split(Split::kTrain);
  const auto& test = desk_split(Split::kTest);
  CHECK(train.size() == 4000);
  CHECK(test.size() == 1000);
  CHECK(testing::shape(train.images) == "(4000, 1, 16, 16)");
  CHECK(train.info.num_classes == 10);
  CHECK(train.labels.min().item<int64_t>() == 0);
  CHECK(train.labels.max().item<int64_t>() == 9);
  // every class present in the test split
  CHECK(torch::bincount(test.labels).gt(0).all().item<bool>());
  auto native = ingest_dataset("mnist-subset", Split::kTest, {"", 0});
  CHECK(testing::shape(native.images) == "(1000, 1, 28, 28)");
  CHECK(dataset_info("cifar10").train_count == 50000);
  CHECK(dataset_info("cifar10").test_count == 10000);
}

TEST_CASE("unknown dataset lists the supported ones") {
  auto msg = testing::error_message_of([] { dataset_info("imagenet"); });
  for (const auto& name : supported_datasets()) {
    CHECK(msg.find(name) != std::string::npos);
  }
  CHECK(error_code_of([] {
          ingest_dataset("svhn", Split::kTest, {});
        }) == code(ErrorCode::kIngestion));
}

TEST_CASE("checksum mismatch reports expected and actual digests") {
  REQUIRE(testing::desk_data_available());
  auto root = testing::scratch_dir("corrupt");
  auto src = fs::path(resolve_data_dir("")) / "mnist-subset";
  fs::copy(src, root / "mnist-subset");
  const auto victim = root / "mnist-subset" / "t10k-labels-idx1-ubyte";
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20);
    char c = 0;
    f.read(&c, 1);
    f.seekp(20);
    c = static_cast<char>((c + 1) % 10);
    f.write(&c, 1);
  }
  std::string msg;
  try {
    ingest_dataset("mnist-subset", Split::kTest, {root.string(), 16});
  } catch (const Error& e) {
    CHECK(static_cast<int>(e.code()) == code(ErrorCode::kIngestion));
    msg = e.what();
  }
  CHECK(msg.find("checksum mismatch") != std::string::npos);
  CHECK(msg.find("expected 66e4c6de") != std::string::npos);
  CHECK(msg.find("actual " + sha256_file(victim.string())) != std::string::npos);
  // the untouched split still loads
  CHECK_NOTHROW(ingest_dataset("mnist-subset", Split::kTrain, {root.string(), 16}));
  fs::remove_all(root);
}

TEST_CASE("missing dataset directory is an ingestion error") {
  auto root = testing::scratch_dir("empty-data");
  CHECK(error_code_of([&] {
          ingest_dataset("mnist-subset", Split::kTest, {root.string(), 16});
        }) == code(ErrorCode::kIngestion));
}

TEST_CASE("training embargo fails and is recorded") {
  DataAccessAudit audit;
  audit.set_training_embargo(true);
  CHECK(error_code_of([&] {
          ingest_dataset("mnist-subset", Split::kTrain, {"", 16}, &audit);
        }) == code(ErrorCode::kDataFreeViolation));
  auto msg = testing::error_message_of([&] { audit.record("mnist-subset", Split::kTrain); });
  CHECK(msg.find("data-free violation") != std::string::npos);
  CHECK(audit.training_reads() == 0);
  CHECK(audit.denied_reads() == 2);
  CHECK_NOTHROW(audit.record("mnist-subset", Split::kTest));
  DataAccessAudit open;
  open.record("mnist-subset", Split::kTrain);
  CHECK(open.training_reads() == 1);
}

TEST_CASE("normalization round trip and resize") {
  auto px = torch::rand({3, 1, 28, 28});
  Normalization n{{0.1307}, {0.3081}};
  CHECK(torch::allclose(denormalize_images(normalize_images(px, n), n), px,
                        1e-6, 1e-6));
  CHECK(testing::shape(resize_images(px, 32)) == "(3, 1, 32, 32)");
  auto r16 = resize_images(torch::ones({1, 1, 28, 28}), 16);
  CHECK(testing::shape(r16) == "(1, 1, 16, 16)");
  CHECK(r16[0][0][0][0].item<double>() == 0.0);  // padding only
  CHECK(r16[0][0][1][1].item<double>() == doctest::Approx(1.0));
  CHECK(r16[0][0][8][8].item<double>() == doctest::Approx(1.0));
}

// ---- config ----------------------------------------------------------------

TEST_CASE("profiles validate and round-trip through JSON") {
  for (const auto& name : profile_names()) {
    auto c = profile_config(name);
    CHECK_NOTHROW(c.validate());
    auto back = TrainConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.digest() == c.digest());
  }
  CHECK(profile_config("mnist-desk").digest() != profile_config("cifar-desk").digest());
  CHECK(resolve_profile("desk", "mnist-subset").profile == "mnist-desk");
  CHECK(resolve_profile("desk", "cifar10").profile == "cifar-desk");
  CHECK(error_code_of([] { profile_config("huge"); }) ==
        code(ErrorCode::kInvalidArgument));
  CHECK(error_code_of([] { TrainConfig::from_json("{not json"); }) ==
        code(ErrorCode::kInvalidArgument));
  CHECK(error_code_of([] { TrainConfig::from_json(R"({"seeds": []})"); }) ==
        code(ErrorCode::kInvalidArgument));
  auto o = TrainConfig::from_json(
      R"({"base_profile": "cifar-desk", "kd": {"epochs": 2}, "seeds": [5]})");
  CHECK(o.teacher.arch == "cifar-resnet8");
  CHECK(o.kd.epochs == 2);
  CHECK(o.seeds == std::vector<uint64_t>{5});
}

TEST_CASE("plan expansion") {
  auto cfg = profile_config("mnist-desk");
  CHECK(table1_cells(cfg).size() == 24);
  auto ab = ablation_cells(cfg);
  CHECK(ab.size() == 9);
  std::set<std::string> modes;
  for (const auto& c : ab) {
    CHECK(c.method == Method::kDfQat);
    CHECK(c.bits == 8);
    modes.insert(loss_mode_name(c.loss_mode));
  }
  CHECK(modes.size() == 3);
  auto full = full_cells(cfg);
  CHECK(full.size() == 24 + 6 + 1);
  std::set<std::string> ids;
  for (const auto& c : full) ids.insert(c.id());
  CHECK(ids.size() == full.size());
  CHECK(ids.count("DF-QAT/int8/ce+bns/s0/frozen-gen") == 1);

  auto p = ExperimentPlan::from_json(
      R"({"profile": "mnist-desk", "plan": "ablation", "output_dir": "x"})");
  CHECK(p.cells.size() == 9);
  auto back = ExperimentPlan::from_json(p.to_json());
  REQUIRE(back.cells.size() == p.cells.size());
  for (std::size_t i = 0; i < p.cells.size(); ++i) {
    CHECK(back.cells[i].id() == p.cells[i].id());
  }
  CHECK(back.config.digest() == p.config.digest());
  CHECK(error_code_of([] {
          ExperimentPlan::from_json(R"({"plan": "table9"})");
        }) == code(ErrorCode::kInvalidArgument));
  CHECK(error_code_of([] {
          ExperimentPlan::from_json(R"({"cells": [{"method": "DF-QAT", "bits": 4}]})");
        }) == code(ErrorCode::kInvalidArgument));
}

TEST_CASE("metrics records round-trip, NaN included") {
  MetricsRecord r;
  r.cell_id = "DF-QAT/int8/ce+bns/s0";
  r.kind = "cell";
  r.method = "DF-QAT";
  r.bits = 8;
  r.accuracy = 0.9731;
  r.loss_curve = {1.5, 0.75};
  r.config_digest = "abc";
  r.artifacts = {"a", "b"};
  auto line = r.to_json();
  CHECK(line.find('\n') == std::string::npos);
  auto back = MetricsRecord::from_json(line);
  CHECK(back.accuracy == r.accuracy);
  CHECK(std::isnan(back.fidelity));
  CHECK(back.loss_curve == r.loss_curve);
  CHECK(back.artifacts == r.artifacts);
  CHECK(error_code_of([] { MetricsRecord::from_json("{}"); }) ==
        code(ErrorCode::kIo));
}

TEST_CASE("aggregate skips non-finite values") {
  auto a = aggregate({0.5, NAN, 0.7, 0.6});
  CHECK(a.n == 3);
  CHECK(a.mean == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(a.min == 0.5);
  CHECK(a.max == 0.7);
  CHECK(aggregate({}).n == 0);
}

TEST_CASE("aligned text table") {
  auto t = render_text_table({"model", "acc"}, {{"a", "97.40"}, {"longer", "1"}});
  std::istringstream in(t);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "model     acc");
  CHECK(lines[1] == "-------------");
  CHECK(lines[2] == "a       97.40");
  CHECK(lines[3] == "longer      1");
}

// ---- checkpoints -----------------------------------------------------------

TEST_CASE("teacher checkpoint round trip and digest check") {
  auto dir = testing::scratch_dir("ckpt-teacher");
  auto arch = testing::small_arch({4, 6});
  auto t = testing::random_teacher(arch, 4);
  TeacherManifest m;
  m.arch = arch;
  m.dataset = "mnist-subset";
  m.normalization = {{0.1307}, {0.3081}};
  m.accuracy = 0.5;
  const auto path = (dir / "t.pt").string();
  save_teacher(path, t, m);
  CHECK(fs::exists(manifest_path(path)));
  auto [loaded, lm] = load_teacher(path);
  CHECK(state_digest(*loaded) == state_digest(*t));
  CHECK(lm.parameter_digest == state_digest(*t));
  CHECK(lm.accuracy == 0.5);
  CHECK(lm.arch.widths == arch.widths);
  CHECK_FALSE(loaded->is_training());
  auto x = torch::randn({3, 1, 8, 8});
  CHECK(torch::equal(teacher_forward(loaded, x), teacher_forward(t, x)));

  auto j = json::parse(read_text_file(manifest_path(path)));
  j["parameter_digest"] = std::string(64, '0');
  write_text_file(manifest_path(path), j.dump());
  auto msg = testing::error_message_of([&] { load_teacher(path); });
  CHECK(msg.find("digest mismatch") != std::string::npos);
  CHECK(error_code_of([&] { load_teacher(path); }) == code(ErrorCode::kIo));
  CHECK(error_code_of([&] { load_teacher((dir / "none.pt").string()); }) ==
        code(ErrorCode::kIo));
}

TEST_CASE("generator checkpoint keeps weights, manifest and optimizer") {
  auto dir = testing::scratch_dir("ckpt-gen");
  auto arch = testing::small_arch({4, 6});
  auto teacher = testing::random_teacher(arch, 4);
  torch::manual_seed(8);
  ConditionalGenerator g(testing::small_generator_spec(arch, 6, 4));
  ZsCganConfig zc;
  zc.epochs = 1;
  zc.batches_per_epoch = 2;
  zc.batch_size = 8;
  ZsCganTrainer trainer(g, teacher, zc);
  trainer.run();
  GeneratorManifest m;
  m.spec = g->spec();
  m.config = zc;
  m.teacher_digest = state_digest(*teacher);
  m.fidelity = 0.25;
  const auto path = (dir / "g.pt").string();
  save_generator(path, g, m, &trainer.optimizer());
  auto [lg, lm] = load_generator(path);
  CHECK(state_digest(*lg) == state_digest(*g));
  CHECK(lm.teacher_digest == m.teacher_digest);
  CHECK(lm.config.batches_per_epoch == 2);
  CHECK(lm.spec.noise_dim == 6);
  CHECK(lm.fidelity == 0.25);
  ZsCganTrainer fresh(lg, teacher, lm.config);
  CHECK(load_generator_optimizer(path, fresh.optimizer()));
  auto z = torch::randn({4, 6});
  auto y = torch::tensor({0, 1, 2, 3}, torch::kLong);
  CHECK(torch::equal(generator_forward(lg, z, y), generator_forward(g, z, y)));
}

TEST_CASE("student checkpoint round trip keeps quantization parameters bit-exact") {
  auto dir = testing::scratch_dir("ckpt-student");
  auto arch = testing::small_arch({4, 6});
  auto teacher = testing::random_teacher(arch, 4);
  torch::manual_seed(5);
  auto student = apply_quant_spec(
      teacher, calibrate_ptq(teacher, {torch::randn({16, 1, 8, 8})}, {6, false}));
  StudentManifest m;
  m.arch = arch;
  m.method = "DF-PTQ";
  m.bits = 6;
  m.dataset = "mnist-subset";
  m.teacher_digest = state_digest(*teacher);
  const auto path = (dir / "s.pt").string();
  save_student(path, student, m);
  CHECK(fs::exists(path + ".spec.json"));
  auto [loaded, lm] = load_student(path);
  CHECK((loaded.spec() == student.spec()));
  CHECK(lm.bits == 6);
  CHECK(lm.method == "DF-PTQ");
  student.eval();
  loaded.eval();
  auto x = torch::randn({4, 1, 8, 8});
  CHECK(torch::equal(loaded.forward(x), student.forward(x)));
  CHECK(state_digest(*loaded.net()) == state_digest(*student.net()));
}

// ---- grid ------------------------------------------------------------------

TEST_CASE("sample grid is 10 x 8 with argmax annotations") {
  auto dir = testing::scratch_dir("grid");
  auto arch = testing::small_arch({4, 6}, 16, 10);
  auto teacher = testing::random_teacher(arch, 2);
  torch::manual_seed(6);
  ConditionalGenerator g(testing::small_generator_spec(arch, 8, 8));
  g->eval();
  std::vector<int64_t> classes(10);
  for (int i = 0; i < 10; ++i) classes[i] = i;
  GridOptions go;
  go.tile_size = 32;
  go.seed = 3;
  const auto path = (dir / "grid.png").string();
  auto r = export_sample_grid(g, teacher, classes, 8, path, go);
  CHECK(r.rows == 10);
  CHECK(r.cols == 8);
  REQUIRE(r.tiles.size() == 80);
  auto img = cv::imread(path, cv::IMREAD_UNCHANGED);
  REQUIRE_FALSE(img.empty());
  CHECK(img.cols == r.width);
  CHECK(img.rows == r.height);
  CHECK(r.width >= 8 * 32);
  CHECK(r.height >= 10 * 32);

  // Independent recomputation of tiles and their teacher argmax.
  auto rng = make_rng(3);
  auto z = torch::randn({80, 8}, rng);
  auto y = torch::arange(10, torch::kLong).repeat_interleave(8);
  auto probs = torch::softmax(teacher_forward(teacher, generator_forward(g, z, y)), 1);
  for (const auto& t : r.tiles) {
    const auto i = t.row * 8 + t.col;
    CHECK(t.conditioning_label == t.row);
    CHECK(t.predicted_label == probs[i].argmax().item<int64_t>());
    CHECK(t.confidence == doctest::Approx(probs[i].max().item<double>()).epsilon(1e-6));
  }
  // a directory in place of the file
  fs::create_directories(dir / "taken.png");
  CHECK(error_code_of([&] {
          export_sample_grid(g, teacher, classes, 8, (dir / "taken.png").string(), go);
        }) == code(ErrorCode::kIo));
  CHECK(error_code_of([&] {
          export_sample_grid(g, teacher, {10}, 8, path, go);
        }) == code(ErrorCode::kContract));
}

// ---- evaluation ------------------------------------------------------------

TEST_CASE("constant predictor on a balanced split scores 1 / K") {
  LabeledImages set;
  set.images = torch::zeros({100, 1, 4, 4});
  set.labels = torch::arange(10, torch::kLong).repeat(10);
  auto constant = [](const torch::Tensor& x) {
    auto out = torch::zeros({x.size(0), 10});
    out.select(1, 0).fill_(1.0);
    return out;
  };
  CHECK(evaluate_logits(constant, set, 7) == 0.1);
  CHECK(evaluate_logits(constant, set, 500) == 0.1);
  LabeledImages empty;
  empty.images = torch::zeros({0, 1, 4, 4});
  empty.labels = torch::zeros({0}, torch::kLong);
  CHECK(error_code_of([&] { evaluate_logits(constant, empty, 10); }) ==
        code(ErrorCode::kInvalidArgument));
}

TEST_CASE("zero-epoch teacher cannot be exported") {
  auto cfg = quick_teacher_cfg();
  cfg.epochs = 0;
  auto msg = testing::error_message_of([&] {
    build_desk_teacher(cfg, desk_split(Split::kTrain), desk_split(Split::kTest));
  });
  CHECK(msg.find("teacher must be trained before export") != std::string::npos);
}

TEST_CASE("trained teacher: recorded accuracy, determinism, positive variances") {
  REQUIRE(testing::desk_data_available());
  const auto& t = quick_teacher();
  const auto& test = desk_split(Split::kTest);
  CHECK(t.history.size() == 3);
  CHECK(t.accuracy > 0.8);
  CHECK(evaluate(t.model, test) == t.accuracy);
  CHECK(evaluate(t.model, test, 37) == t.accuracy);
  // independent count through the raw forward
  int64_t correct = 0;
  for (int64_t i = 0; i < test.size(); i += 100) {
    auto logits = teacher_forward(t.model, test.images.narrow(0, i, 100));
    correct += logits.argmax(1).eq(test.labels.narrow(0, i, 100)).sum().item<int64_t>();
  }
  CHECK(static_cast<double>(correct) / 1000.0 == t.accuracy);
  for (auto& [name, bn] : t.model->bn_modules()) {
    CHECK(bn->running_var.min().item<double>() > 0);
  }
  // checkpoint keeps the accuracy exactly
  auto [loaded, m] = load_teacher(quick_teacher_path());
  CHECK(m.accuracy == t.accuracy);
  CHECK(evaluate(loaded, test) == m.accuracy);
}

TEST_CASE("teacher training is reproducible for a fixed seed") {
  auto cfg = quick_teacher_cfg();
  cfg.epochs = 1;
  auto a = build_desk_teacher(cfg, desk_split(Split::kTrain), desk_split(Split::kTest));
  auto b = build_desk_teacher(cfg, desk_split(Split::kTrain), desk_split(Split::kTest));
  CHECK(state_digest(*a.model) == state_digest(*b.model));
  CHECK(a.accuracy == b.accuracy);
}

TEST_CASE("FP32 bypass student distilled on real data keeps teacher accuracy") {
  const auto& t = quick_teacher();
  const auto& test = desk_split(Split::kTest);
  torch::manual_seed(1);
  auto calib = desk_split(Split::kTrain).images.narrow(0, 0, 256);
  StudentOptions so;
  so.bypass = true;
  auto student = apply_quant_spec(t.model, calibrate_ptq(t.model, {calib}, {8, false}), so);
  CHECK(evaluate(student, test) == t.accuracy);
  KDConfig kc;
  kc.data_free = false;
  kc.lambda = 1.0;
  kc.epochs = 1;
  kc.batches_per_epoch = 40;
  kc.batch_size = 64;
  kc.lr = 1e-3;
  kc.seed = 2;
  auto report = train_data_dependent_qat(student, t.model, desk_split(Split::kTrain), kc);
  CHECK(report.epochs.size() == 1);
  const double acc = evaluate(student, test);
  CHECK(std::abs(acc - t.accuracy) <= 0.005);
}

// ---- plans -----------------------------------------------------------------

namespace {

ExperimentPlan tiny_plan(const fs::path& out) {
  ExperimentPlan p;
  p.config = profile_config("mnist-desk");
  p.config.teacher = quick_teacher_cfg();
  p.config.generator.epochs = 1;
  p.config.generator.batches_per_epoch = 4;
  p.config.generator.batch_size = 32;
  p.config.generator_shape.noise_dim = 16;
  p.config.generator_shape.base_channels = 8;
  p.config.kd.epochs = 1;
  p.config.kd.batches_per_epoch = 4;
  p.config.kd.batch_size = 32;
  p.config.calibration.samples = 128;
  p.config.calibration.batch_size = 64;
  p.config.seeds = {0};
  for (auto m : {Method::kDfPtq, Method::kDfQat, Method::kDdPtq, Method::kDdQat}) {
    PlanCell c;
    c.method = m;
    c.bits = 8;
    p.cells.push_back(c);
  }
  p.output_dir = out.string();
  p.teacher_path = quick_teacher_path();
  return p;
}

}  // namespace

TEST_CASE("tiny plan: resume, interruption, audit, manifests") {
  REQUIRE(testing::desk_data_available());
  auto root = testing::scratch_dir("plan");
  auto whole = tiny_plan(root / "whole");
  auto split = tiny_plan(root / "split");

  auto a = run_plan(whole);
  CHECK(a.complete);
  CHECK(a.executed == 6);  // teacher, one generator, four cells
  CHECK(a.skipped == 0);
  CHECK(a.teacher_accuracy() == quick_teacher().accuracy);
  REQUIRE(a.invariants.size() == 1);
  CHECK(a.invariants[0].name.find("INT8") != std::string::npos);

  SUBCASE("rerun skips everything") {
    auto again = run_plan(whole);
    CHECK(again.complete);
    CHECK(again.executed == 0);
    CHECK(again.skipped == 6);
    CHECK(read_lines(fs::path(whole.output_dir) / "metrics.jsonl").size() == 6);
  }

  SUBCASE("interrupted run resumes to the same tables") {
    auto part = run_plan(split, {3, {}});
    CHECK_FALSE(part.complete);
    CHECK(part.executed == 3);
    const auto partial_lines = read_lines(fs::path(split.output_dir) / "metrics.jsonl");
    CHECK(partial_lines.size() == 3);
    auto rest = run_plan(split);
    CHECK(rest.complete);
    CHECK(rest.executed == 3);
    CHECK(rest.skipped == 3);
    const auto lines = read_lines(fs::path(split.output_dir) / "metrics.jsonl");
    REQUIRE(lines.size() == 6);
    for (std::size_t i = 0; i < partial_lines.size(); ++i) {
      CHECK(lines[i] == partial_lines[i]);  // append-only
    }
    CHECK(read_text_file(fs::path(split.output_dir) / "table1.csv") ==
          read_text_file(fs::path(whole.output_dir) / "table1.csv"));
    CHECK(read_text_file(fs::path(split.output_dir) / "table1.txt") ==
          read_text_file(fs::path(whole.output_dir) / "table1.txt"));
    for (const auto& [id, r] : a.records) {
      REQUIRE(rest.records.count(id) == 1);
      const double x = rest.records.at(id).accuracy;
      CHECK(((std::isnan(x) && std::isnan(r.accuracy)) || x == r.accuracy));
    }
  }

  SUBCASE("config change reruns dependent cells only") {
    auto changed = whole;
    changed.config.kd.lr = 2e-3;
    auto r = run_plan(changed);
    CHECK(r.complete);
    CHECK(r.executed == 4);
    CHECK(r.skipped == 2);
    CHECK(read_lines(fs::path(whole.output_dir) / "metrics.jsonl").size() == 10);
  }

  SUBCASE("data-free units never read the training split") {
    std::map<std::string, int64_t> train_reads;
    std::set<std::string> seen;
    for (const auto& line : read_lines(fs::path(whole.output_dir) / "audit.jsonl")) {
      auto j = json::parse(line);
      const std::string id = j.at("cell_id");
      seen.insert(id);
      if (j.at("split").is_string() && j.at("split") == "train") ++train_reads[id];
      if (id.rfind("DF-", 0) == 0 || id.rfind("generator/", 0) == 0) {
        CHECK(j.at("embargoed").get<bool>());
      }
    }
    CHECK(seen.size() == 6);
    for (const auto& [id, r] : a.records) {
      const bool df = id.rfind("DF-", 0) == 0 || id.rfind("generator/", 0) == 0;
      if (df) {
        CHECK(r.training_reads == 0);
        CHECK(train_reads[id] == 0);
      }
      if (id.rfind("DD-", 0) == 0) CHECK(r.training_reads == 1);
    }
  }

  SUBCASE("every artifact belongs to exactly one record") {
    std::map<std::string, int> owners;
    for (const auto& line : read_lines(fs::path(whole.output_dir) / "metrics.jsonl")) {
      for (const auto& art : MetricsRecord::from_json(line).artifacts) ++owners[art];
    }
    const fs::path out(whole.output_dir);
    int files = 0;
    for (const auto& sub : {"teacher", "generators", "cells"}) {
      if (!fs::exists(out / sub)) continue;
      for (const auto& e : fs::recursive_directory_iterator(out / sub)) {
        if (!e.is_regular_file()) continue;
        ++files;
        const auto rel = fs::relative(e.path(), out).generic_string();
        CHECK_MESSAGE(owners[rel] == 1, rel);
      }
    }
    CHECK(files > 0);
    for (const auto& [rel, n] : owners) CHECK_MESSAGE(fs::exists(out / rel), rel);
    for (const auto* f : {"results.csv", "generators.csv", "table1.csv", "table1.txt",
                          "table2.csv", "table2.txt", "plan.json"}) {
      CHECK_MESSAGE(fs::exists(out / f), f);
    }
  }

  SUBCASE("records carry provenance") {
    for (const auto& [id, r] : a.records) {
      CHECK(r.code_version == code_version());
      CHECK(r.config_digest.size() == 64);
      CHECK(r.wall_clock >= 0);
    }
    const auto& q = a.records.at("DF-QAT/int8/ce+bns/s0");
    CHECK(q.accuracy_curve.size() == 1);
    CHECK(q.loss_curve.size() == 1);
    auto loaded = load_plan_result(whole);
    CHECK(loaded.complete);
    CHECK(loaded.records.size() == a.records.size());
  }
}

TEST_CASE("ablation plan: three generators, three DF-QAT runs, one table") {
  REQUIRE(testing::desk_data_available());
  auto root = testing::scratch_dir("ablation");
  auto p = tiny_plan(root);
  p.cells = ablation_cells(p.config);
  auto r = run_plan(p);
  CHECK(r.complete);
  int gens = 0, cells = 0;
  for (const auto& [id, rec] : r.records) {
    gens += rec.kind == "generator";
    cells += rec.kind == "cell";
    if (rec.kind == "cell") CHECK(rec.method == "DF-QAT");
  }
  CHECK(gens == 3);
  CHECK(cells == 3);
  const auto t2 = read_text_file((root / "table2.txt").string());
  for (const auto* row : {"Synthetic (CE+BNS)", "Synthetic (CE)", "Synthetic (BNS)"}) {
    CHECK_MESSAGE(t2.find(row) != std::string::npos, row);
  }
  CHECK(read_lines(root / "table2.csv").size() == 5);  // header, teacher, 3 rows
}

TEST_CASE("plan contract errors") {
  ExperimentPlan p = tiny_plan("");
  CHECK(error_code_of([&] { run_plan(p); }) == code(ErrorCode::kInvalidArgument));
  p.output_dir = testing::scratch_dir("plan-empty").string();
  p.cells.clear();
  CHECK(error_code_of([&] { run_plan(p); }) == code(ErrorCode::kInvalidArgument));
}

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

// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <dfq/dfq.h>

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  dfq_string_free(s);
  return out;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "dfq-capi" /
             (name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string tiny_config() {
  char* raw = nullptr;
  REQUIRE(dfq_profile_json("mnist-desk", nullptr, &raw) == DFQ_OK);
  auto j = json::parse(take(raw));
  j["teacher"]["epochs"] = 1;
  j["generator"]["epochs"] = 1;
  j["generator"]["batches_per_epoch"] = 3;
  j["generator"]["batch_size"] = 32;
  j["generator"]["noise_dim"] = 16;
  j["generator"]["base_channels"] = 8;
  j["kd"]["epochs"] = 1;
  j["kd"]["batches_per_epoch"] = 3;
  j["kd"]["batch_size"] = 32;
  j["calibration"]["samples"] = 128;
  j["calibration"]["batch_size"] = 64;
  j["seeds"] = {0};
  return j.dump();
}

void count_lines(const char*, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("status names, version, last error") {
  CHECK(std::string(dfq_status_name(DFQ_OK)) == "ok");
  CHECK(std::string(dfq_status_name(DFQ_ERR_DATA_FREE_VIOLATION)).find("data-free") !=
        std::string::npos);
  CHECK(std::string(dfq_version()).size() > 0);
  dfq_teacher* t = nullptr;
  CHECK(dfq_teacher_load("/nonexistent/teacher.pt", &t) == DFQ_ERR_IO);
  CHECK(t == nullptr);
  CHECK(std::string(dfq_last_error()).find("/nonexistent/teacher.pt") != std::string::npos);
  char* raw = nullptr;
  CHECK(dfq_profile_json("mnist-desk", nullptr, &raw) == DFQ_OK);
  CHECK(std::string(dfq_last_error()).empty());
  CHECK(json::parse(take(raw)).at("teacher").at("dataset") == "mnist-subset");
  CHECK(dfq_profile_json("desk", "cifar10", &raw) == DFQ_OK);
  CHECK(json::parse(take(raw)).at("profile") == "cifar-desk");
  CHECK(dfq_profile_json("nope", nullptr, &raw) == DFQ_ERR_INVALID_ARGUMENT);
  CHECK(dfq_profile_json("mnist-desk", nullptr, nullptr) == DFQ_ERR_INVALID_ARGUMENT);
  dfq_teacher_free(nullptr);
  dfq_generator_free(nullptr);
  dfq_student_free(nullptr);
  dfq_string_free(nullptr);
}

TEST_CASE("plan templates") {
  char* raw = nullptr;
  REQUIRE(dfq_plan_template("mnist-desk", "ablation", "/tmp/x", &raw) == DFQ_OK);
  auto j = json::parse(take(raw));
  CHECK(j.at("cells").size() == 9);
  CHECK(j.at("output_dir") == "/tmp/x");
  CHECK(dfq_plan_template("mnist-desk", "bogus", "/tmp/x", &raw) ==
        DFQ_ERR_INVALID_ARGUMENT);
  CHECK(dfq_plan_run("{broken", -1, nullptr, nullptr, &raw) ==
        DFQ_ERR_INVALID_ARGUMENT);
}

TEST_CASE("teacher -> generator -> PTQ / QAT through handles") {
  dfq_set_num_threads(1);
  const auto dir = scratch("chain");
  const auto cfg = tiny_config();
  int lines = 0;
  dfq_teacher* teacher = nullptr;
  const auto tpath = (dir / "teacher.pt").string();
  REQUIRE(dfq_teacher_train(cfg.c_str(), nullptr, tpath.c_str(), count_lines,
                            &lines, &teacher) == DFQ_OK);
  CHECK(lines > 0);
  CHECK(fs::exists(tpath + ".json"));

  auto info = json::parse(take([&] {
    char* s = nullptr;
    CHECK(dfq_teacher_info(teacher, &s) == DFQ_OK);
    return s;
  }()));
  const double recorded = info.at("accuracy");
  double acc = 0;
  REQUIRE(dfq_teacher_evaluate(teacher, nullptr, &acc) == DFQ_OK);
  CHECK(acc == recorded);
  CHECK(dfq_evaluate_checkpoint(tpath.c_str(), nullptr, &acc) == DFQ_OK);
  CHECK(acc == recorded);

  char* digest = nullptr;
  REQUIRE(dfq_teacher_digest(teacher, &digest) == DFQ_OK);
  const auto d0 = take(digest);
  CHECK(d0.size() == 64);
  dfq_teacher* reloaded = nullptr;
  REQUIRE(dfq_teacher_load(tpath.c_str(), &reloaded) == DFQ_OK);
  REQUIRE(dfq_teacher_digest(reloaded, &digest) == DFQ_OK);
  CHECK(take(digest) == d0);
  dfq_teacher_free(reloaded);

  const auto stats = (dir / "stats.json").string();
  REQUIRE(dfq_teacher_export_stats(teacher, stats.c_str()) == DFQ_OK);
  {
    std::ifstream in(stats);
    auto rows = json::parse(in);
    REQUIRE(rows.is_array());
    CHECK(rows.size() > 0);
    for (const auto& r : rows) CHECK(r.at("variance").get<double>() > 0);
  }

  dfq_generator* gen = nullptr;
  const auto gdir = (dir / "gen").string();
  CHECK(dfq_generator_train(teacher, cfg.c_str(), "sideways", 0, gdir.c_str(), 0,
                            nullptr, nullptr, &gen) == DFQ_ERR_INVALID_ARGUMENT);
  REQUIRE(dfq_generator_train(teacher, cfg.c_str(), "ce+bns", 0, gdir.c_str(), 0,
                              nullptr, nullptr, &gen) == DFQ_OK);
  CHECK(fs::exists(fs::path(gdir) / "generator.pt"));
  CHECK(fs::exists(fs::path(gdir) / "report.csv"));
  double fid = -1;
  REQUIRE(dfq_generator_fidelity(gen, teacher, 200, 3, &fid) == DFQ_OK);
  CHECK(fid >= 0);
  CHECK(fid <= 1);
  // teacher unchanged by generator training
  REQUIRE(dfq_teacher_digest(teacher, &digest) == DFQ_OK);
  CHECK(take(digest) == d0);

  const auto samples = (dir / "samples.pt").string();
  REQUIRE(dfq_generate(gen, teacher, 20, 1, samples.c_str()) == DFQ_OK);
  CHECK(fs::exists(samples + ".csv"));
  CHECK(dfq_generate(gen, teacher, 0, 1, samples.c_str()) == DFQ_ERR_CONTRACT);

  const auto grid = (dir / "grid.png").string();
  const int64_t classes[] = {0, 3, 7};
  char* ann = nullptr;
  REQUIRE(dfq_export_grid(gen, teacher, classes, 3, 4, 0, grid.c_str(), &ann) ==
          DFQ_OK);
  auto tiles = json::parse(take(ann));
  CHECK(tiles.at("rows") == 3);
  CHECK(tiles.at("cols") == 4);
  CHECK(tiles.at("tiles").size() == 12);
  CHECK(fs::exists(grid));

  dfq_student* ptq = nullptr;
  CHECK(dfq_ptq(teacher, gen, cfg.c_str(), 4, 0, nullptr, &ptq) ==
        DFQ_ERR_INVALID_ARGUMENT);
  REQUIRE(dfq_ptq(teacher, gen, cfg.c_str(), 6, 0, nullptr, &ptq) == DFQ_OK);
  char* spec = nullptr;
  REQUIRE(dfq_student_spec_json(ptq, &spec) == DFQ_OK);
  auto sites = json::parse(take(spec));
  REQUIRE(sites.is_array());
  bool any6 = false;
  for (const auto& s : sites) any6 = any6 || s.at("bits") == 6;
  CHECK(any6);
  double ptq_acc = 0;
  REQUIRE(dfq_student_evaluate(ptq, nullptr, &ptq_acc) == DFQ_OK);
  const auto spath = (dir / "ptq.pt").string();
  REQUIRE(dfq_student_save(ptq, spath.c_str()) == DFQ_OK);
  dfq_student* back = nullptr;
  REQUIRE(dfq_student_load(spath.c_str(), &back) == DFQ_OK);
  double back_acc = 0;
  REQUIRE(dfq_student_evaluate(back, nullptr, &back_acc) == DFQ_OK);
  CHECK(back_acc == ptq_acc);
  CHECK(dfq_evaluate_checkpoint(spath.c_str(), nullptr, &acc) == DFQ_OK);
  CHECK(acc == ptq_acc);

  dfq_student* qat = nullptr;
  CHECK(dfq_qat(teacher, nullptr, cfg.c_str(), 8, 1, 1, 0, nullptr, nullptr,
                nullptr, nullptr, &qat) == DFQ_ERR_INVALID_ARGUMENT);
  const auto report = (dir / "qat.csv").string();
  REQUIRE(dfq_qat(teacher, gen, cfg.c_str(), 8, 1, 1, 0, nullptr, report.c_str(),
                  nullptr, nullptr, &qat) == DFQ_OK);
  CHECK(fs::exists(report));
  double qat_acc = 0;
  CHECK(dfq_student_evaluate(qat, nullptr, &qat_acc) == DFQ_OK);
  CHECK(qat_acc > 0.1);

  dfq_student_free(qat);
  dfq_student_free(back);
  dfq_student_free(ptq);
  dfq_generator_free(gen);
  dfq_teacher_free(teacher);
}

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

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dfq/dfq.h"
#include "json.hpp"

namespace {

// Thrown on a non-OK status; carries the process exit code.
struct CliFailure {
  int code;
};

void check(dfq_status s, const std::string& what) {
  if (s == DFQ_OK) return;
  std::cerr << "dfq: " << what << " failed (" << dfq_status_name(s)
            << "): " << dfq_last_error() << "\n";
  throw CliFailure{static_cast<int>(s)};
}

void print_line(const char* line, void*) {
  std::cerr << line << std::endl;
}

std::string take(char* s) {
  std::string out = s ? s : "";
  dfq_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "dfq: cannot read " << path << "\n";
    throw CliFailure{DFQ_ERR_IO};
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TeacherPtr {
  dfq_teacher* p = nullptr;
  ~TeacherPtr() { dfq_teacher_free(p); }
};
struct GeneratorPtr {
  dfq_generator* p = nullptr;
  ~GeneratorPtr() { dfq_generator_free(p); }
};
struct StudentPtr {
  dfq_student* p = nullptr;
  ~StudentPtr() { dfq_student_free(p); }
};

// --config wins over --profile; empty means "desk profile of the dataset".
std::string config_text(const std::string& config_path,
                        const std::string& profile,
                        const std::string& dataset) {
  if (!config_path.empty()) return read_file(config_path);
  if (profile.empty()) return {};
  char* json = nullptr;
  check(dfq_profile_json(profile.c_str(), dataset.c_str(), &json), "profile");
  return take(json);
}

std::string teacher_dataset(dfq_teacher* t) {
  char* info = nullptr;
  check(dfq_teacher_info(t, &info), "teacher info");
  return nlohmann::json::parse(take(info)).value("dataset", "");
}

std::string with_keep_io(const std::string& cfg, bool keep_io) {
  if (!keep_io) return cfg;
  auto j = nlohmann::json::parse(cfg);
  j["calibration"]["keep_io_8bit"] = true;
  return j.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-free quantization toolkit"};
  app.require_subcommand(1);
  std::string data_dir;
  int threads = 0;
  app.add_option("--data-dir", data_dir,
                 "dataset root (default: $DFQ_DATA_DIR, then ./data)");
  app.add_option("--threads", threads, "intra-op threads");

  // train-teacher
  auto* tt = app.add_subcommand("train-teacher", "train a desk teacher");
  std::string tt_profile = "mnist-desk", tt_config, tt_out;
  int64_t tt_epochs = -1;
  tt->add_option("--profile", tt_profile, "mnist-desk, cifar-desk or cifar-full");
  tt->add_option("--config", tt_config, "TrainConfig JSON file");
  tt->add_option("--epochs", tt_epochs, "override teacher epochs");
  tt->add_option("--out", tt_out, "checkpoint path")->required();

  // train-generator
  auto* tg = app.add_subcommand("train-generator", "train a ZS-CGAN generator");
  std::string tg_teacher, tg_mode = "ce+bns", tg_profile = "desk", tg_config,
                          tg_out;
  uint64_t tg_seed = 0;
  int64_t tg_grid_every = 0;
  tg->add_option("--teacher", tg_teacher, "teacher checkpoint")->required();
  tg->add_option("--mode", tg_mode, "ce+bns, ce or bns")
      ->check(CLI::IsMember({"ce+bns", "ce", "bns"}));
  tg->add_option("--profile", tg_profile, "desk or full");
  tg->add_option("--config", tg_config, "TrainConfig JSON file");
  tg->add_option("--seed", tg_seed);
  tg->add_option("--grid-every", tg_grid_every,
                 "write a sample grid every N epochs");
  tg->add_option("--out", tg_out, "output directory")->required();

  // generate
  auto* ge = app.add_subcommand("generate", "sample synthetic labeled data");
  std::string ge_generator, ge_teacher, ge_out;
  int64_t ge_n = 10000;
  uint64_t ge_seed = 0;
  ge->add_option("--generator", ge_generator)->required();
  ge->add_option("--teacher", ge_teacher)->required();
  ge->add_option("-n,--count", ge_n);
  ge->add_option("--seed", ge_seed);
  ge->add_option("--out", ge_out, "tensor file (+ .csv)")->required();

  // ptq
  auto* pq = app.add_subcommand("ptq", "post-training quantization");
  std::string pq_teacher, pq_generator, pq_profile = "desk", pq_config,
                                        pq_out;
  int pq_bits = 8;
  uint64_t pq_seed = 0;
  bool pq_keep_io = false;
  pq->add_option("--teacher", pq_teacher)->required();
  pq->add_option("--generator", pq_generator,
                 "calibrate on synthetic data (omit for real data)");
  pq->add_option("--bits", pq_bits)->check(CLI::IsMember({8, 6}));
  pq->add_option("--profile", pq_profile);
  pq->add_option("--config", pq_config);
  pq->add_option("--seed", pq_seed);
  pq->add_flag("--keep-io-8bit", pq_keep_io,
               "keep the first/last layers and the input/logits at 8 bits");
  pq->add_option("--out", pq_out, "student checkpoint")->required();

  // qat
  auto* qa = app.add_subcommand("qat", "quantization-aware distillation");
  std::string qa_mode = "data-free", qa_teacher, qa_generator,
              qa_profile = "desk", qa_config, qa_out, qa_report;
  int qa_bits = 8;
  uint64_t qa_seed = 0;
  bool qa_freeze_gen = false, qa_keep_io = false;
  qa->add_option("--mode", qa_mode)
      ->check(CLI::IsMember({"data-free", "data-dependent"}));
  qa->add_option("--bits", qa_bits)->check(CLI::IsMember({8, 6}));
  qa->add_option("--student-from", qa_teacher, "teacher checkpoint")
      ->required();
  qa->add_option("--generator", qa_generator, "generator checkpoint");
  qa->add_option("--profile", qa_profile);
  qa->add_option("--config", qa_config);
  qa->add_option("--seed", qa_seed);
  qa->add_flag("--no-generator-updates", qa_freeze_gen);
  qa->add_flag("--keep-io-8bit", qa_keep_io);
  qa->add_option("--report", qa_report, "per-epoch CSV");
  qa->add_option("--out", qa_out, "student checkpoint")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "top-1 on the test split");
  std::string ev_model;
  ev->add_option("--model", ev_model, "teacher or student checkpoint")
      ->required();

  // run-plan
  auto* rp = app.add_subcommand("run-plan", "run or resume an experiment plan");
  std::string rp_plan, rp_profile = "mnist-desk", rp_kind = "full", rp_out,
                       rp_teacher;
  int64_t rp_stop_after = -1;
  bool rp_print_template = false;
  rp->add_option("--plan", rp_plan, "plan JSON file");
  rp->add_option("--profile", rp_profile);
  rp->add_option("--kind", rp_kind, "full, table1 or ablation");
  rp->add_option("--out", rp_out, "output directory");
  rp->add_option("--teacher", rp_teacher, "use an existing teacher");
  rp->add_option("--stop-after", rp_stop_after,
                 "stop after N units of work (resume later)");
  rp->add_flag("--print-template", rp_print_template,
               "print the plan JSON instead of running it");

  // export-stats
  auto* es = app.add_subcommand("export-stats", "teacher BN statistics JSON");
  std::string es_teacher, es_out;
  es->add_option("--teacher", es_teacher)->required();
  es->add_option("--out", es_out)->required();

  // export-grid
  auto* eg = app.add_subcommand("export-grid", "PNG grid of synthetic samples");
  std::string eg_generator, eg_teacher, eg_out;
  std::vector<int64_t> eg_classes;
  int64_t eg_samples = 8;
  uint64_t eg_seed = 0;
  eg->add_option("--generator", eg_generator)->required();
  eg->add_option("--teacher", eg_teacher)->required();
  eg->add_option("--classes", eg_classes, "class indices (default: all)");
  eg->add_option("--samples", eg_samples, "samples per class");
  eg->add_option("--seed", eg_seed);
  eg->add_option("--out", eg_out)->required();

  CLI11_PARSE(app, argc, argv);
  dfq_set_num_threads(threads);
  const char* dd = data_dir.empty() ? nullptr : data_dir.c_str();

  try {
    if (*tt) {
      auto cfg = config_text(tt_config, tt_profile, "");
      if (tt_epochs >= 0) {
        auto j = nlohmann::json::parse(cfg);
        j["teacher"]["epochs"] = tt_epochs;
        cfg = j.dump();
      }
      TeacherPtr t;
      check(dfq_teacher_train(cfg.c_str(), dd, tt_out.c_str(), print_line,
                              nullptr, &t.p),
            "train-teacher");
      std::cout << take([&] {
        char* s = nullptr;
        check(dfq_teacher_info(t.p, &s), "teacher info");
        return s;
      }()) << "\n";
    } else if (*tg) {
      TeacherPtr t;
      check(dfq_teacher_load(tg_teacher.c_str(), &t.p), "load teacher");
      auto cfg = config_text(tg_config, tg_profile, teacher_dataset(t.p));
      GeneratorPtr g;
      check(dfq_generator_train(t.p, cfg.c_str(), tg_mode.c_str(), tg_seed,
                                tg_out.c_str(), tg_grid_every, print_line,
                                nullptr, &g.p),
            "train-generator");
      char* info = nullptr;
      check(dfq_generator_info(g.p, &info), "generator info");
      std::cout << take(info) << "\n";
    } else if (*ge) {
      TeacherPtr t;
      GeneratorPtr g;
      check(dfq_teacher_load(ge_teacher.c_str(), &t.p), "load teacher");
      check(dfq_generator_load(ge_generator.c_str(), &g.p), "load generator");
      check(dfq_generate(g.p, t.p, ge_n, ge_seed, ge_out.c_str()), "generate");
      std::cout << "wrote " << ge_n << " samples to " << ge_out << "\n";
    } else if (*pq) {
      TeacherPtr t;
      GeneratorPtr g;
      check(dfq_teacher_load(pq_teacher.c_str(), &t.p), "load teacher");
      if (!pq_generator.empty()) {
        check(dfq_generator_load(pq_generator.c_str(), &g.p),
              "load generator");
      }
      auto cfg = config_text(pq_config, pq_profile, teacher_dataset(t.p));
      cfg = with_keep_io(cfg, pq_keep_io);
      StudentPtr s;
      check(dfq_ptq(t.p, g.p, cfg.c_str(), pq_bits, pq_seed, dd, &s.p), "ptq");
      check(dfq_student_save(s.p, pq_out.c_str()), "save student");
      double acc = 0;
      check(dfq_student_evaluate(s.p, dd, &acc), "evaluate");
      std::printf("%s INT%d accuracy %.4f\n",
                  g.p ? "DF-PTQ" : "DD-PTQ", pq_bits, acc);
    } else if (*qa) {
      TeacherPtr t;
      GeneratorPtr g;
      check(dfq_teacher_load(qa_teacher.c_str(), &t.p), "load teacher");
      const bool df = qa_mode == "data-free";
      if (df) {
        if (qa_generator.empty()) {
          std::cerr << "dfq: --generator is required for data-free QAT\n";
          return DFQ_ERR_INVALID_ARGUMENT;
        }
        check(dfq_generator_load(qa_generator.c_str(), &g.p),
              "load generator");
      }
      auto cfg = config_text(qa_config, qa_profile, teacher_dataset(t.p));
      cfg = with_keep_io(cfg, qa_keep_io);
      StudentPtr s;
      check(dfq_qat(t.p, g.p, cfg.c_str(), qa_bits, df ? 1 : 0,
                    qa_freeze_gen ? 0 : 1, qa_seed, dd,
                    qa_report.empty() ? nullptr : qa_report.c_str(),
                    print_line, nullptr, &s.p),
            "qat");
      check(dfq_student_save(s.p, qa_out.c_str()), "save student");
      double acc = 0;
      check(dfq_student_evaluate(s.p, dd, &acc), "evaluate");
      std::printf("%s INT%d accuracy %.4f\n", df ? "DF-QAT" : "DD-QAT",
                  qa_bits, acc);
    } else if (*ev) {
      double acc = 0;
      check(dfq_evaluate_checkpoint(ev_model.c_str(), dd, &acc), "evaluate");
      std::printf("accuracy %.4f\n", acc);
    } else if (*rp) {
      std::string plan;
      if (!rp_plan.empty()) {
        plan = read_file(rp_plan);
      } else {
        if (rp_out.empty()) {
          std::cerr << "dfq: run-plan needs --plan or --out\n";
          return DFQ_ERR_INVALID_ARGUMENT;
        }
        char* s = nullptr;
        check(dfq_plan_template(rp_profile.c_str(), rp_kind.c_str(),
                                rp_out.c_str(), &s),
              "plan template");
        plan = take(s);
      }
      {
        auto j = nlohmann::json::parse(plan);
        if (!rp_teacher.empty()) j["teacher_path"] = rp_teacher;
        if (!rp_plan.empty() && !rp_out.empty()) j["output_dir"] = rp_out;
        if (dd != nullptr) j["data_dir"] = data_dir;
        plan = j.dump(2);
      }
      if (rp_print_template) {
        std::cout << plan << "\n";
        return 0;
      }
      char* summary = nullptr;
      check(dfq_plan_run(plan.c_str(), rp_stop_after, print_line, nullptr,
                         &summary),
            "run-plan");
      std::cout << take(summary) << "\n";
    } else if (*es) {
      TeacherPtr t;
      check(dfq_teacher_load(es_teacher.c_str(), &t.p), "load teacher");
      check(dfq_teacher_export_stats(t.p, es_out.c_str()), "export-stats");
      std::cout << "wrote " << es_out << "\n";
    } else if (*eg) {
      TeacherPtr t;
      GeneratorPtr g;
      check(dfq_teacher_load(eg_teacher.c_str(), &t.p), "load teacher");
      check(dfq_generator_load(eg_generator.c_str(), &g.p), "load generator");
      char* ann = nullptr;
      check(dfq_export_grid(g.p, t.p, eg_classes.data(), eg_classes.size(),
                            eg_samples, eg_seed, eg_out.c_str(), &ann),
            "export-grid");
      std::cout << take(ann) << "\n";
    }
  } catch (const CliFailure& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "dfq: " << e.what() << "\n";
    return DFQ_ERR_INVALID_ARGUMENT;
  }
  return 0;
}

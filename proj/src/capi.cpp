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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "dfq/bn_stats.hpp"
#include "dfq/checkpoint.hpp"
#include "dfq/config.hpp"
#include "dfq/data.hpp"
#include "dfq.h"
#include "dfq/digest.hpp"
#include "dfq/distill.hpp"
#include "dfq/error.hpp"
#include "dfq/grid.hpp"
#include "dfq/plan.hpp"
#include "dfq/teacher.hpp"
#include "json.hpp"

struct dfq_teacher {
  dfq::Classifier model{nullptr};
  dfq::TeacherManifest manifest;
};

struct dfq_generator {
  dfq::ConditionalGenerator g{nullptr};
  dfq::GeneratorManifest manifest;
  std::string path;
};

struct dfq_student {
  dfq::StudentModel student;
  dfq::StudentManifest manifest;
};

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

thread_local std::string g_last_error;

template <typename F>
dfq_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return DFQ_OK;
  } catch (const dfq::Error& e) {
    g_last_error = e.what();
    return static_cast<dfq_status>(static_cast<int>(e.code()));
  } catch (const c10::Error& e) {
    g_last_error = e.what_without_backtrace();
    return DFQ_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DFQ_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  DFQ_CHECK(p != nullptr, dfq::ErrorCode::kInvalidArgument,
            std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  DFQ_CHECK(out != nullptr, dfq::ErrorCode::kInternal, "out of memory");
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string str(const char* s) { return s == nullptr ? std::string() : s; }

std::function<void(const std::string&)> logger(dfq_log_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

dfq::TrainConfig config_for(const char* config_json,
                            const std::string& dataset) {
  if (config_json == nullptr || *config_json == '\0') {
    return dfq::resolve_profile("desk", dataset);
  }
  return dfq::TrainConfig::from_json(config_json);
}

dfq::IngestOptions ingest_options(const char* data_dir,
                                  const dfq::ArchSpec& arch) {
  return dfq::IngestOptions{str(data_dir), arch.height};
}

dfq::LabeledImages test_split(const std::string& dataset,
                              const dfq::ArchSpec& arch, const char* data_dir,
                              dfq::DataAccessAudit* audit) {
  return dfq::ingest_dataset(dataset, dfq::Split::kTest,
                             ingest_options(data_dir, arch), audit);
}

std::string teacher_manifest_json(const dfq_teacher* t) {
  const auto& m = t->manifest;
  json j = {{"architecture", m.arch.id},
            {"num_classes", m.arch.num_classes},
            {"input_shape", {m.arch.in_channels, m.arch.height, m.arch.width}},
            {"dataset", m.dataset},
            {"accuracy", m.accuracy},
            {"parameter_digest", m.parameter_digest},
            {"normalization",
             {{"mean", m.normalization.mean}, {"std", m.normalization.stddev}}}};
  return j.dump(2);
}

dfq::GeneratorSpec generator_spec_for(const dfq_teacher* t,
                                      const dfq::TrainConfig& cfg) {
  dfq::GeneratorSpec gs;
  gs.noise_dim = cfg.generator_shape.noise_dim;
  gs.base_channels = cfg.generator_shape.base_channels;
  gs.num_classes = t->model->arch().num_classes;
  gs.channels = t->model->arch().in_channels;
  gs.height = t->model->arch().height;
  gs.width = t->model->arch().width;
  gs.normalization = t->manifest.normalization;
  return gs;
}

std::vector<std::string> class_names(const std::string& dataset) {
  try {
    return dfq::dataset_info(dataset).class_names;
  } catch (const dfq::Error&) {
    return {};
  }
}

dfq::StudentModel build_ptq_student(dfq_teacher* teacher,
                                    dfq_generator* generator,
                                    const dfq::TrainConfig& cfg, int bits,
                                    uint64_t seed, const char* data_dir,
                                    dfq::DataAccessAudit& audit) {
  DFQ_CHECK(bits == 8 || bits == 6, dfq::ErrorCode::kInvalidArgument,
            "bits must be 8 or 6");
  torch::Tensor images;
  if (generator != nullptr) {
    auto syn = dfq::sample_synthetic(generator->g, teacher->model,
                                     cfg.calibration.samples, seed + 101);
    images = syn.images;
  } else {
    auto train = dfq::ingest_dataset(
        teacher->manifest.dataset, dfq::Split::kTrain,
        ingest_options(data_dir, teacher->model->arch()), &audit);
    const int64_t n = std::min<int64_t>(cfg.calibration.samples, train.size());
    images = train.images.narrow(0, 0, n);
  }
  return dfq::calibrate_student(
      teacher->model, dfq::split_batches(images, cfg.calibration.batch_size),
      bits, cfg.calibration);
}

}  // namespace

extern "C" {

const char* dfq_last_error(void) { return g_last_error.c_str(); }

const char* dfq_status_name(dfq_status status) {
  switch (status) {
    case DFQ_OK:
      return "ok";
    case DFQ_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case DFQ_ERR_CONTRACT:
      return "contract violation";
    case DFQ_ERR_DOMAIN:
      return "domain error";
    case DFQ_ERR_NUMERIC:
      return "numeric error";
    case DFQ_ERR_STRUCTURE:
      return "structural error";
    case DFQ_ERR_INGESTION:
      return "ingestion error";
    case DFQ_ERR_DATA_FREE_VIOLATION:
      return "data-free violation";
    case DFQ_ERR_DIVERGED:
      return "diverged";
    case DFQ_ERR_IO:
      return "I/O error";
    case DFQ_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

const char* dfq_version(void) {
  static const std::string v = dfq::code_version();
  return v.c_str();
}

void dfq_string_free(char* s) { std::free(s); }

void dfq_set_num_threads(int threads) {
  if (threads > 0) torch::set_num_threads(threads);
}

dfq_status dfq_profile_json(const char* profile, const char* dataset,
                            char** out_json) {
  return guarded([&] {
    require(profile, "profile");
    require(out_json, "out_json");
    *out_json = dup_string(
        dfq::resolve_profile(profile, dataset ? dataset : "mnist-subset")
            .to_json());
  });
}

// ---- teacher ---------------------------------------------------------------

dfq_status dfq_teacher_train(const char* config_json, const char* data_dir,
                             const char* out_path, dfq_log_fn log, void* user,
                             dfq_teacher** out) {
  return guarded([&] {
    require(out_path, "out_path");
    require(out, "out");
    auto cfg = config_json && *config_json
                   ? dfq::TrainConfig::from_json(config_json)
                   : dfq::profile_config("mnist-desk");
    const auto& tc = cfg.teacher;
    dfq::IngestOptions io{str(data_dir), tc.image_size};
    auto train = dfq::ingest_dataset(tc.dataset, dfq::Split::kTrain, io);
    auto test = dfq::ingest_dataset(tc.dataset, dfq::Split::kTest, io);
    auto emit = logger(log, user);
    if (emit) {
      emit("training " + tc.arch + " on " + tc.dataset + " (" +
           std::to_string(train.size()) + " images)");
    }
    auto trained = dfq::build_desk_teacher(tc, train, test);
    if (emit) {
      for (const auto& h : trained.history) {
        emit("epoch " + std::to_string(h.epoch) + " loss " +
             std::to_string(h.loss) + " test " +
             std::to_string(h.test_accuracy));
      }
    }
    auto t = std::make_unique<dfq_teacher>();
    t->model = trained.model;
    t->manifest.arch = trained.model->arch();
    t->manifest.dataset = tc.dataset;
    t->manifest.normalization = train.info.normalization;
    t->manifest.accuracy = trained.accuracy;
    dfq::save_teacher(out_path, t->model, t->manifest);
    t->manifest.parameter_digest = dfq::state_digest(*t->model);
    *out = t.release();
  });
}

dfq_status dfq_teacher_load(const char* path, dfq_teacher** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto [model, manifest] = dfq::load_teacher(path);
    auto t = std::make_unique<dfq_teacher>();
    t->model = model;
    t->manifest = manifest;
    *out = t.release();
  });
}

void dfq_teacher_free(dfq_teacher* teacher) { delete teacher; }

dfq_status dfq_teacher_info(const dfq_teacher* teacher, char** out_json) {
  return guarded([&] {
    require(teacher, "teacher");
    require(out_json, "out_json");
    *out_json = dup_string(teacher_manifest_json(teacher));
  });
}

dfq_status dfq_teacher_digest(const dfq_teacher* teacher, char** out_hex) {
  return guarded([&] {
    require(teacher, "teacher");
    require(out_hex, "out_hex");
    *out_hex = dup_string(dfq::state_digest(*teacher->model));
  });
}

dfq_status dfq_teacher_evaluate(dfq_teacher* teacher, const char* data_dir,
                                double* accuracy) {
  return guarded([&] {
    require(teacher, "teacher");
    require(accuracy, "accuracy");
    auto test = test_split(teacher->manifest.dataset, teacher->model->arch(),
                           data_dir, nullptr);
    *accuracy = dfq::evaluate(teacher->model, test);
  });
}

dfq_status dfq_teacher_export_stats(dfq_teacher* teacher, const char* path) {
  return guarded([&] {
    require(teacher, "teacher");
    require(path, "path");
    auto table = dfq::extract_reference_stats(teacher->model);
    dfq::write_text_file(path, dfq::stats_to_json(table) + "\n");
  });
}

// ---- generator -------------------------------------------------------------

dfq_status dfq_generator_train(dfq_teacher* teacher, const char* config_json,
                               const char* mode, uint64_t seed,
                               const char* out_dir, int64_t grid_every,
                               dfq_log_fn log, void* user,
                               dfq_generator** out) {
  return guarded([&] {
    require(teacher, "teacher");
    require(out_dir, "out_dir");
    require(out, "out");
    auto cfg = config_for(config_json, teacher->manifest.dataset);
    dfq::ZsCganConfig zc = cfg.generator;
    zc.loss_mode = dfq::parse_loss_mode(mode ? mode : "ce+bns");
    zc.seed = seed;
    const auto gs = generator_spec_for(teacher, cfg);
    torch::manual_seed(seed);
    dfq::ConditionalGenerator g(gs);
    dfq::ZsCganTrainer trainer(g, teacher->model, zc);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    auto emit = logger(log, user);
    std::vector<int64_t> classes(gs.num_classes);
    for (int64_t k = 0; k < gs.num_classes; ++k) classes[k] = k;
    dfq::GridOptions go;
    go.seed = seed;
    go.class_names = class_names(teacher->manifest.dataset);
    auto grid_path = [&](int64_t epoch) {
      char name[32];
      std::snprintf(name, sizeof(name), "grid_e%03lld.png",
                    static_cast<long long>(epoch));
      return (dir / name).string();
    };
    auto report = trainer.run([&](const dfq::ZsCganEpoch& e,
                                  dfq::ConditionalGenerator gen) {
      if (emit) {
        emit("epoch " + std::to_string(e.epoch) + " total " +
             std::to_string(e.total) + " ce " + std::to_string(e.ce) +
             " bns " + std::to_string(e.bns) + " fidelity " +
             std::to_string(e.fidelity));
      }
      if (grid_every > 0 && e.epoch % grid_every == 0) {
        dfq::export_sample_grid(gen, teacher->model, classes, 8,
                                grid_path(e.epoch), go);
      }
    });
    if (grid_every <= 0 || zc.epochs % grid_every != 0) {
      dfq::export_sample_grid(g, teacher->model, classes, 8,
                              grid_path(zc.epochs), go);
    }
    auto h = std::make_unique<dfq_generator>();
    h->g = g;
    h->manifest.spec = gs;
    h->manifest.config = zc;
    h->manifest.teacher_digest = dfq::state_digest(*teacher->model);
    h->manifest.fidelity = dfq::label_fidelity(
        g, teacher->model, cfg.calibration.samples, seed + 7919);
    h->path = (dir / "generator.pt").string();
    dfq::save_generator(h->path, g, h->manifest, &trainer.optimizer());
    h->manifest.parameter_digest = dfq::state_digest(*g);
    dfq::write_text_file((dir / "report.csv").string(), report.to_csv());
    if (emit) emit("label fidelity " + std::to_string(h->manifest.fidelity));
    *out = h.release();
  });
}

dfq_status dfq_generator_load(const char* path, dfq_generator** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto [g, m] = dfq::load_generator(path);
    auto h = std::make_unique<dfq_generator>();
    h->g = g;
    h->manifest = m;
    h->path = path;
    *out = h.release();
  });
}

void dfq_generator_free(dfq_generator* generator) { delete generator; }

dfq_status dfq_generator_info(const dfq_generator* generator,
                              char** out_json) {
  return guarded([&] {
    require(generator, "generator");
    require(out_json, "out_json");
    *out_json = dup_string(
        dfq::read_text_file(dfq::manifest_path(generator->path)));
  });
}

dfq_status dfq_generator_fidelity(dfq_generator* generator,
                                  dfq_teacher* teacher, int64_t n,
                                  uint64_t seed, double* fidelity) {
  return guarded([&] {
    require(generator, "generator");
    require(teacher, "teacher");
    require(fidelity, "fidelity");
    *fidelity = dfq::label_fidelity(generator->g, teacher->model, n, seed);
  });
}

dfq_status dfq_generate(dfq_generator* generator, dfq_teacher* teacher,
                        int64_t n, uint64_t seed, const char* out_path) {
  return guarded([&] {
    require(generator, "generator");
    require(teacher, "teacher");
    require(out_path, "out_path");
    auto batch = dfq::sample_synthetic(generator->g, teacher->model, n, seed);
    const auto parent = fs::path(out_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    try {
      torch::save(std::vector<torch::Tensor>{batch.images, batch.labels,
                                             batch.teacher_probs},
                  out_path);
    } catch (const c10::Error& e) {
      dfq::fail(dfq::ErrorCode::kIo,
                std::string("cannot write samples: ") +
                    e.what_without_backtrace());
    }
    auto [conf, pred] = batch.teacher_probs.max(1);
    std::string csv = "index,label,predicted,confidence\n";
    for (int64_t i = 0; i < n; ++i) {
      csv += std::to_string(i) + "," +
             std::to_string(batch.labels[i].item<int64_t>()) + "," +
             std::to_string(pred[i].item<int64_t>()) + "," +
             std::to_string(conf[i].item<double>()) + "\n";
    }
    dfq::write_text_file(std::string(out_path) + ".csv", csv);
  });
}

dfq_status dfq_export_grid(dfq_generator* generator, dfq_teacher* teacher,
                           const int64_t* classes, size_t num_classes,
                           int64_t samples_per_class, uint64_t seed,
                           const char* path, char** out_annotations) {
  return guarded([&] {
    require(generator, "generator");
    require(teacher, "teacher");
    require(path, "path");
    std::vector<int64_t> rows;
    if (classes != nullptr && num_classes > 0) {
      rows.assign(classes, classes + num_classes);
    } else {
      for (int64_t k = 0; k < generator->g->spec().num_classes; ++k) {
        rows.push_back(k);
      }
    }
    dfq::GridOptions go;
    go.seed = seed;
    go.class_names = class_names(teacher->manifest.dataset);
    auto r = dfq::export_sample_grid(generator->g, teacher->model, rows,
                                     samples_per_class, path, go);
    if (out_annotations != nullptr) {
      json j = {{"rows", r.rows},
                {"cols", r.cols},
                {"width", r.width},
                {"height", r.height},
                {"tiles", json::array()}};
      for (const auto& t : r.tiles) {
        j["tiles"].push_back({{"row", t.row},
                              {"col", t.col},
                              {"label", t.conditioning_label},
                              {"predicted", t.predicted_label},
                              {"confidence", t.confidence}});
      }
      *out_annotations = dup_string(j.dump());
    }
  });
}

// ---- student ---------------------------------------------------------------

dfq_status dfq_ptq(dfq_teacher* teacher, dfq_generator* generator,
                   const char* config_json, int bits, uint64_t seed,
                   const char* data_dir, dfq_student** out) {
  return guarded([&] {
    require(teacher, "teacher");
    require(out, "out");
    auto cfg = config_for(config_json, teacher->manifest.dataset);
    dfq::DataAccessAudit audit;
    audit.set_training_embargo(generator != nullptr);
    torch::manual_seed(seed);
    auto student = build_ptq_student(teacher, generator, cfg, bits, seed,
                                     data_dir, audit);
    auto test = test_split(teacher->manifest.dataset, teacher->model->arch(),
                           data_dir, &audit);
    auto h = std::make_unique<dfq_student>(
        dfq_student{std::move(student), dfq::StudentManifest{}});
    h->manifest.arch = teacher->model->arch();
    h->manifest.dataset = teacher->manifest.dataset;
    h->manifest.method = generator != nullptr ? "DF-PTQ" : "DD-PTQ";
    h->manifest.bits = bits;
    h->manifest.accuracy = dfq::evaluate(h->student, test);
    h->manifest.teacher_digest = dfq::state_digest(*teacher->model);
    *out = h.release();
  });
}

dfq_status dfq_qat(dfq_teacher* teacher, dfq_generator* generator,
                   const char* config_json, int bits, int data_free,
                   int continue_generator_updates, uint64_t seed,
                   const char* data_dir, const char* report_csv,
                   dfq_log_fn log, void* user, dfq_student** out) {
  return guarded([&] {
    require(teacher, "teacher");
    require(out, "out");
    auto cfg = config_for(config_json, teacher->manifest.dataset);
    DFQ_CHECK(!data_free || generator != nullptr,
              dfq::ErrorCode::kInvalidArgument,
              "data-free QAT needs a generator checkpoint");
    dfq::DataAccessAudit audit;
    audit.set_training_embargo(data_free != 0);
    torch::manual_seed(seed);
    auto test = test_split(teacher->manifest.dataset, teacher->model->arch(),
                           data_dir, &audit);
    auto student =
        build_ptq_student(teacher, data_free ? generator : nullptr, cfg, bits,
                          seed, data_dir, audit);
    auto emit = logger(log, user);
    auto eval_fn = [&](dfq::StudentModel& s) {
      const double acc = dfq::evaluate(s, test);
      if (emit) emit("epoch accuracy " + std::to_string(acc));
      return acc;
    };
    dfq::KDConfig kc = cfg.kd;
    kc.seed = seed;
    dfq::DistillReport report;
    if (data_free) {
      // Co-training continues on a copy; the loaded generator is untouched.
      auto g = dfq::clone_generator(generator->g);
      dfq::ZsCganConfig zc = generator->manifest.config;
      zc.batch_size = kc.batch_size;
      zc.seed = seed + 211;
      dfq::ZsCganTrainer trainer(g, teacher->model, zc);
      dfq::load_generator_optimizer(generator->path, trainer.optimizer());
      kc.data_free = true;
      kc.lambda = 1.0;
      kc.continue_generator_updates = continue_generator_updates != 0;
      report = dfq::train_data_free_qat(student, teacher->model, trainer, kc,
                                        eval_fn);
    } else {
      auto train = dfq::ingest_dataset(
          teacher->manifest.dataset, dfq::Split::kTrain,
          ingest_options(data_dir, teacher->model->arch()), &audit);
      report = dfq::train_data_dependent_qat(student, teacher->model, train,
                                             kc, eval_fn);
    }
    if (report_csv != nullptr && *report_csv != '\0') {
      dfq::write_text_file(report_csv, report.to_csv());
    }
    auto h = std::make_unique<dfq_student>(
        dfq_student{std::move(student), dfq::StudentManifest{}});
    h->manifest.arch = teacher->model->arch();
    h->manifest.dataset = teacher->manifest.dataset;
    h->manifest.method = data_free ? "DF-QAT" : "DD-QAT";
    h->manifest.bits = bits;
    h->manifest.accuracy = dfq::evaluate(h->student, test);
    h->manifest.teacher_digest = dfq::state_digest(*teacher->model);
    *out = h.release();
  });
}

dfq_status dfq_student_save(dfq_student* student, const char* path) {
  return guarded([&] {
    require(student, "student");
    require(path, "path");
    dfq::save_student(path, student->student, student->manifest);
  });
}

dfq_status dfq_student_load(const char* path, dfq_student** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto [s, m] = dfq::load_student(path);
    *out = new dfq_student{std::move(s), m};
  });
}

void dfq_student_free(dfq_student* student) { delete student; }

dfq_status dfq_student_evaluate(dfq_student* student, const char* data_dir,
                                double* accuracy) {
  return guarded([&] {
    require(student, "student");
    require(accuracy, "accuracy");
    auto test = test_split(student->manifest.dataset, student->manifest.arch,
                           data_dir, nullptr);
    *accuracy = dfq::evaluate(student->student, test);
  });
}

dfq_status dfq_student_spec_json(const dfq_student* student,
                                 char** out_json) {
  return guarded([&] {
    require(student, "student");
    require(out_json, "out_json");
    *out_json = dup_string(student->student.spec().to_json());
  });
}

dfq_status dfq_evaluate_checkpoint(const char* path, const char* data_dir,
                                   double* accuracy) {
  return guarded([&] {
    require(path, "path");
    require(accuracy, "accuracy");
    json j;
    try {
      j = json::parse(dfq::read_text_file(dfq::manifest_path(path)));
    } catch (const json::exception& e) {
      dfq::fail(dfq::ErrorCode::kIo,
                std::string("malformed manifest: ") + e.what());
    }
    const auto kind = j.value("kind", "");
    if (kind == "teacher") {
      auto [model, m] = dfq::load_teacher(path);
      *accuracy =
          dfq::evaluate(model, test_split(m.dataset, m.arch, data_dir, nullptr));
    } else if (kind == "student") {
      auto [s, m] = dfq::load_student(path);
      *accuracy =
          dfq::evaluate(s, test_split(m.dataset, m.arch, data_dir, nullptr));
    } else {
      dfq::fail(dfq::ErrorCode::kInvalidArgument,
                std::string(path) + " is neither a teacher nor a student");
    }
  });
}

// ---- plans -----------------------------------------------------------------

dfq_status dfq_plan_run(const char* plan_json, int64_t stop_after,
                        dfq_log_fn log, void* user, char** out_summary) {
  return guarded([&] {
    require(plan_json, "plan_json");
    auto plan = dfq::ExperimentPlan::from_json(plan_json);
    dfq::PlanRunOptions o;
    o.stop_after = stop_after;
    o.log = logger(log, user);
    auto r = dfq::run_plan(plan, o);
    if (out_summary != nullptr) {
      json j = {{"complete", r.complete},
                {"executed", r.executed},
                {"skipped", r.skipped},
                {"output_dir", plan.output_dir},
                {"invariants", json::array()}};
      for (const auto& c : r.invariants) {
        j["invariants"].push_back(
            {{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
      }
      j["table1"] = dfq::render_table1(r, plan).text;
      j["table2"] = dfq::render_table2(r, plan).text;
      *out_summary = dup_string(j.dump(2));
    }
  });
}

dfq_status dfq_plan_template(const char* profile, const char* kind,
                             const char* output_dir, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    dfq::ExperimentPlan p;
    p.config = dfq::profile_config(profile ? profile : "mnist-desk");
    const std::string k = kind ? kind : "full";
    if (k == "table1") {
      p.cells = dfq::table1_cells(p.config);
    } else if (k == "ablation") {
      p.cells = dfq::ablation_cells(p.config);
    } else if (k == "full") {
      p.cells = dfq::full_cells(p.config);
    } else {
      dfq::fail(dfq::ErrorCode::kInvalidArgument,
                "unknown plan kind '" + k + "' (table1, ablation, full)");
    }
    p.output_dir = str(output_dir);
    *out_json = dup_string(p.to_json());
  });
}

}  // extern "C"

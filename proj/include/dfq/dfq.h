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

#ifndef DFQ_DFQ_H_
#define DFQ_DFQ_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DFQ_API __declspec(dllexport)
#else
#define DFQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dfq_status {
  DFQ_OK = 0,
  DFQ_ERR_INVALID_ARGUMENT = 1,
  DFQ_ERR_CONTRACT = 2,
  DFQ_ERR_DOMAIN = 3,
  DFQ_ERR_NUMERIC = 4,
  DFQ_ERR_STRUCTURE = 5,
  DFQ_ERR_INGESTION = 6,
  DFQ_ERR_DATA_FREE_VIOLATION = 7,
  DFQ_ERR_DIVERGED = 8,
  DFQ_ERR_IO = 9,
  DFQ_ERR_INTERNAL = 10
} dfq_status;

typedef struct dfq_teacher dfq_teacher;
typedef struct dfq_generator dfq_generator;
typedef struct dfq_student dfq_student;

/* Progress lines from long-running calls; may be NULL. */
typedef void (*dfq_log_fn)(const char* line, void* user);

/* Message of the last failing call on this thread ("" if none). */
DFQ_API const char* dfq_last_error(void);
DFQ_API const char* dfq_status_name(dfq_status status);
DFQ_API const char* dfq_version(void);
/* Strings returned through char** out-parameters are freed with this. */
DFQ_API void dfq_string_free(char* s);
/* Intra-op threads used by the tensor backend (<= 0 leaves the default). */
DFQ_API void dfq_set_num_threads(int threads);

/* Full TrainConfig JSON for a named profile (mnist-desk, cifar-desk, cifar-full,
   or desk/full resolved against `dataset`, which may be NULL). */
DFQ_API dfq_status dfq_profile_json(const char* profile, const char* dataset,
                                    char** out_json);

/* ---- teacher ---------------------------------------------------------- */

/* Trains per the config's teacher section and writes `out_path` plus its
   `.json` manifest. `data_dir` NULL or "" falls back to DFQ_DATA_DIR. */
DFQ_API dfq_status dfq_teacher_train(const char* config_json,
                                     const char* data_dir,
                                     const char* out_path, dfq_log_fn log,
                                     void* user, dfq_teacher** out);
DFQ_API dfq_status dfq_teacher_load(const char* path, dfq_teacher** out);
DFQ_API void dfq_teacher_free(dfq_teacher* teacher);
/* Manifest as JSON. */
DFQ_API dfq_status dfq_teacher_info(const dfq_teacher* teacher,
                                    char** out_json);
/* SHA-256 over the teacher's parameters and buffers. */
DFQ_API dfq_status dfq_teacher_digest(const dfq_teacher* teacher,
                                      char** out_hex);
/* Top-1 on the test split of the dataset recorded in the manifest. */
DFQ_API dfq_status dfq_teacher_evaluate(dfq_teacher* teacher,
                                        const char* data_dir,
                                        double* accuracy);
/* Reference BN statistics as [{layer, channel, mean, variance}]. */
DFQ_API dfq_status dfq_teacher_export_stats(dfq_teacher* teacher,
                                            const char* path);

/* ---- generator -------------------------------------------------------- */

/* Trains with the config's generator section and `mode` ("ce+bns", "ce",
   "bns"). Writes generator.pt (+ manifest, optimizer state), report.csv
   and, every `grid_every` epochs (0: only at the end), grid_eNNN.png into
   `out_dir`. */
DFQ_API dfq_status dfq_generator_train(dfq_teacher* teacher,
                                       const char* config_json,
                                       const char* mode, uint64_t seed,
                                       const char* out_dir, int64_t grid_every,
                                       dfq_log_fn log, void* user,
                                       dfq_generator** out);
DFQ_API dfq_status dfq_generator_load(const char* path, dfq_generator** out);
DFQ_API void dfq_generator_free(dfq_generator* generator);
DFQ_API dfq_status dfq_generator_info(const dfq_generator* generator,
                                      char** out_json);
DFQ_API dfq_status dfq_generator_fidelity(dfq_generator* generator,
                                          dfq_teacher* teacher, int64_t n,
                                          uint64_t seed, double* fidelity);
/* n synthetic samples: images/labels/probabilities as tensors in
   `out_path` and labels with teacher predictions in `out_path`.csv. */
DFQ_API dfq_status dfq_generate(dfq_generator* generator,
                                dfq_teacher* teacher, int64_t n,
                                uint64_t seed, const char* out_path);
/* PNG grid; rows are `classes` (all classes when NULL / 0). Annotations
   are returned as JSON when `out_annotations` is not NULL. */
DFQ_API dfq_status dfq_export_grid(dfq_generator* generator,
                                   dfq_teacher* teacher,
                                   const int64_t* classes, size_t num_classes,
                                   int64_t samples_per_class, uint64_t seed,
                                   const char* path, char** out_annotations);

/* ---- quantized student ------------------------------------------------ */

/* PTQ: calibration on `calibration samples` synthetic images from
   `generator`, or on real training images when `generator` is NULL. */
DFQ_API dfq_status dfq_ptq(dfq_teacher* teacher, dfq_generator* generator,
                           const char* config_json, int bits, uint64_t seed,
                           const char* data_dir, dfq_student** out);
/* QAT by distillation, starting from the matching PTQ student. Data-free
   runs embargo the training split and need a generator; data-dependent
   runs ignore it. `report_csv` may be NULL. */
DFQ_API dfq_status dfq_qat(dfq_teacher* teacher, dfq_generator* generator,
                           const char* config_json, int bits, int data_free,
                           int continue_generator_updates, uint64_t seed,
                           const char* data_dir, const char* report_csv,
                           dfq_log_fn log, void* user, dfq_student** out);
DFQ_API dfq_status dfq_student_save(dfq_student* student, const char* path);
DFQ_API dfq_status dfq_student_load(const char* path, dfq_student** out);
DFQ_API void dfq_student_free(dfq_student* student);
DFQ_API dfq_status dfq_student_evaluate(dfq_student* student,
                                        const char* data_dir,
                                        double* accuracy);
/* [{site, kind, bits, scale, zero_point, min, max}] */
DFQ_API dfq_status dfq_student_spec_json(const dfq_student* student,
                                         char** out_json);

/* Teacher or student checkpoint, detected from its manifest. */
DFQ_API dfq_status dfq_evaluate_checkpoint(const char* path,
                                           const char* data_dir,
                                           double* accuracy);

/* ---- plans ------------------------------------------------------------ */

/* Runs (or resumes) a plan. `stop_after` < 0 runs to completion. The
   summary JSON holds executed/skipped counts, invariant checks and the
   rendered tables. */
DFQ_API dfq_status dfq_plan_run(const char* plan_json, int64_t stop_after,
                                dfq_log_fn log, void* user,
                                char** out_summary);
/* Default plan JSON for a profile and kind ("full", "table1",
   "ablation"). */
DFQ_API dfq_status dfq_plan_template(const char* profile, const char* kind,
                                     const char* output_dir,
                                     char** out_json);

#ifdef __cplusplus
}
#endif

#endif  // DFQ_DFQ_H_

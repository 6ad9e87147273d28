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

#ifndef DFQ_PLAN_HPP_
#define DFQ_PLAN_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dfq/config.hpp"
#include "dfq/data.hpp"
#include "dfq/zscgan.hpp"

namespace dfq {

enum class Method { kDfPtq, kDfQat, kDdPtq, kDdQat };
std::string method_name(Method m);  // DF-PTQ, DF-QAT, DD-PTQ, DD-QAT
Method parse_method(const std::string& s);
bool is_data_free(Method m);
bool is_qat(Method m);

struct PlanCell {
  Method method = Method::kDfQat;
  int bits = 8;
  LossMode loss_mode = LossMode::kCePlusBns;  // ignored by DD cells
  uint64_t seed = 0;
  bool continue_generator_updates = true;  // DF-QAT only

  std::string id() const;
};

struct ExperimentPlan {
  TrainConfig config;
  std::vector<PlanCell> cells;
  std::string output_dir;
  std::string teacher_path;  // empty: train from config.teacher
  std::string data_dir;      // empty: $DFQ_DATA_DIR

  std::string to_json() const;
  static ExperimentPlan from_json(const std::string& text);
};

// DF/DD x PTQ/QAT at 8 and 6 bits for every seed (CE+BNS generators).
std::vector<PlanCell> table1_cells(const TrainConfig& cfg);
// DF-QAT INT8 for CE+BNS, CE and BNS generators, every seed.
std::vector<PlanCell> ablation_cells(const TrainConfig& cfg);
// Union of both plus a frozen-generator DF-QAT INT8 run on the first seed.
std::vector<PlanCell> full_cells(const TrainConfig& cfg);

// One per executed unit of work (teacher, generator, cell); metrics.jsonl
// is only ever appended to.
struct MetricsRecord {
  std::string cell_id;
  std::string kind;  // teacher, generator, cell
  std::string method;
  std::string loss_mode;
  int bits = 0;
  uint64_t seed = 0;
  bool continue_generator_updates = true;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double fidelity = std::numeric_limits<double>::quiet_NaN();
  double bns = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> loss_curve;
  std::vector<double> accuracy_curve;
  double wall_clock = 0;
  std::string config_digest;
  std::string code_version;
  int64_t training_reads = 0;
  std::vector<std::string> artifacts;  // relative to the output directory

  std::string to_json() const;  // single line
  static MetricsRecord from_json(const std::string& line);
};

struct Aggregate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
  int64_t n = 0;
};
Aggregate aggregate(const std::vector<double>& values);

struct InvariantCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct PlanResult {
  std::map<std::string, MetricsRecord> records;  // latest per cell id
  int64_t executed = 0;
  int64_t skipped = 0;
  bool complete = false;
  std::vector<InvariantCheck> invariants;  // DF-QAT >= DF-PTQ per bits

  Aggregate accuracy(Method m, int bits, LossMode mode = LossMode::kCePlusBns,
                     bool continue_generator_updates = true) const;
  Aggregate fidelity(LossMode mode) const;
  Aggregate generator_bns(LossMode mode) const;
  double teacher_accuracy() const;
};

struct PlanRunOptions {
  // Stop after executing this many units of work (< 0: run to completion).
  int64_t stop_after = -1;
  std::function<void(const std::string&)> log;
};

// Teacher -> generators -> cells, skipping units whose record (same digest)
// and artifacts already exist. Writes metrics.jsonl, audit.jsonl, results
// and table CSV/text files into the output directory.
PlanResult run_plan(const ExperimentPlan& plan,
                    const PlanRunOptions& options = {});

// Rebuilds tables from an existing output directory.
PlanResult load_plan_result(const ExperimentPlan& plan);

struct RenderedTable {
  std::string csv;
  std::string text;
};
RenderedTable render_table1(const PlanResult& r, const ExperimentPlan& plan);
RenderedTable render_table2(const PlanResult& r, const ExperimentPlan& plan);

// Aligned plain-text rendering of a header + rows.
std::string render_text_table(const std::vector<std::string>& header,
                              const std::vector<std::vector<std::string>>& rows);

std::string code_version();

// Consecutive slices of at most `batch_size` rows.
std::vector<torch::Tensor> split_batches(const torch::Tensor& images,
                                         int64_t batch_size);

// PTQ calibration on `batches` followed by apply_quant_spec, honoring the
// fold and keep-io options.
StudentModel calibrate_student(Classifier teacher,
                               const std::vector<torch::Tensor>& batches,
                               int bits, const CalibrationConfig& options);

}  // namespace dfq

#endif  // DFQ_PLAN_HPP_

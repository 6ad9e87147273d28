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

#include "dfq/plan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "dfq/checkpoint.hpp"
#include "dfq/digest.hpp"
#include "dfq/distill.hpp"
#include "dfq/error.hpp"
#include "dfq/grid.hpp"
#include "dfq/quant.hpp"
#include "dfq/teacher.hpp"
#include "json.hpp"

#ifndef DFQ_VERSION
#define DFQ_VERSION "0.0.0"
#endif

namespace dfq {

using nlohmann::json;
namespace fs = std::filesystem;

std::string code_version() { return DFQ_VERSION; }

std::vector<torch::Tensor> split_batches(const torch::Tensor& images,
                                         int64_t batch_size) {
  DFQ_CHECK(batch_size > 0, ErrorCode::kInvalidArgument,
            "batch size must be positive");
  std::vector<torch::Tensor> out;
  const int64_t n = images.size(0);
  for (int64_t off = 0; off < n; off += batch_size) {
    out.push_back(images.narrow(0, off, std::min(batch_size, n - off)));
  }
  return out;
}

StudentModel calibrate_student(Classifier teacher,
                               const std::vector<torch::Tensor>& batches,
                               int bits, const CalibrationConfig& options) {
  Classifier calib = teacher;
  if (options.fold_bn) {
    calib = clone_classifier(teacher);
    calib->fold_batch_norm();
    calib->eval();
  }
  auto spec = calibrate_ptq(calib, batches, {bits, options.keep_io_8bit});
  StudentOptions so;
  so.fold_bn = options.fold_bn;
  return apply_quant_spec(teacher, spec, so);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kDfPtq:
      return "DF-PTQ";
    case Method::kDfQat:
      return "DF-QAT";
    case Method::kDdPtq:
      return "DD-PTQ";
    case Method::kDdQat:
      return "DD-QAT";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (auto m : {Method::kDfPtq, Method::kDfQat, Method::kDdPtq,
                 Method::kDdQat}) {
    if (method_name(m) == s) return m;
  }
  fail(ErrorCode::kInvalidArgument,
       "unknown method '" + s + "' (expected DF-PTQ, DF-QAT, DD-PTQ, DD-QAT)");
}

bool is_data_free(Method m) {
  return m == Method::kDfPtq || m == Method::kDfQat;
}

bool is_qat(Method m) { return m == Method::kDfQat || m == Method::kDdQat; }

std::string PlanCell::id() const {
  std::string s = method_name(method) + "/int" + std::to_string(bits);
  if (is_data_free(method)) s += "/" + loss_mode_name(loss_mode);
  s += "/s" + std::to_string(seed);
  if (method == Method::kDfQat && !continue_generator_updates) {
    s += "/frozen-gen";
  }
  return s;
}

// ---------------------------------------------------------------------------

namespace {

json cell_json(const PlanCell& c) {
  return {{"method", method_name(c.method)},
          {"bits", c.bits},
          {"loss_mode", loss_mode_name(c.loss_mode)},
          {"seed", c.seed},
          {"continue_generator_updates", c.continue_generator_updates}};
}

PlanCell cell_from(const json& j) {
  PlanCell c;
  c.method = parse_method(j.at("method").get<std::string>());
  c.bits = j.at("bits");
  DFQ_CHECK(c.bits == 8 || c.bits == 6, ErrorCode::kInvalidArgument,
            "plan cell bits must be 8 or 6");
  if (j.contains("loss_mode")) {
    c.loss_mode = parse_loss_mode(j.at("loss_mode").get<std::string>());
  }
  if (j.contains("seed")) c.seed = j.at("seed");
  if (j.contains("continue_generator_updates")) {
    c.continue_generator_updates = j.at("continue_generator_updates");
  }
  return c;
}

double num_or_nan(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return j.at(key).get<double>();
}

}  // namespace

std::string ExperimentPlan::to_json() const {
  json j;
  j["config"] = json::parse(config.to_json());
  j["cells"] = json::array();
  for (const auto& c : cells) j["cells"].push_back(cell_json(c));
  j["output_dir"] = output_dir;
  j["teacher_path"] = teacher_path;
  j["data_dir"] = data_dir;
  return j.dump(2);
}

ExperimentPlan ExperimentPlan::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument,
         std::string("malformed plan JSON: ") + e.what());
  }
  ExperimentPlan p;
  try {
    if (j.contains("config")) {
      p.config = TrainConfig::from_json(j.at("config").dump());
    } else if (j.contains("profile")) {
      p.config = profile_config(j.at("profile").get<std::string>());
    }
    if (j.contains("cells") && j.at("cells").is_array()) {
      for (const auto& c : j.at("cells")) p.cells.push_back(cell_from(c));
    } else {
      const auto kind = j.value("plan", std::string("full"));
      if (kind == "table1") {
        p.cells = table1_cells(p.config);
      } else if (kind == "ablation") {
        p.cells = ablation_cells(p.config);
      } else if (kind == "full") {
        p.cells = full_cells(p.config);
      } else {
        fail(ErrorCode::kInvalidArgument,
             "unknown plan kind '" + kind + "' (table1, ablation, full)");
      }
    }
    p.output_dir = j.value("output_dir", std::string());
    p.teacher_path = j.value("teacher_path", std::string());
    p.data_dir = j.value("data_dir", std::string());
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument,
         std::string("invalid plan field: ") + e.what());
  }
  return p;
}

std::vector<PlanCell> table1_cells(const TrainConfig& cfg) {
  std::vector<PlanCell> cells;
  for (int bits : {8, 6}) {
    for (auto m : {Method::kDfPtq, Method::kDfQat, Method::kDdPtq,
                   Method::kDdQat}) {
      for (auto seed : cfg.seeds) {
        PlanCell c;
        c.method = m;
        c.bits = bits;
        c.seed = seed;
        cells.push_back(c);
      }
    }
  }
  return cells;
}

std::vector<PlanCell> ablation_cells(const TrainConfig& cfg) {
  std::vector<PlanCell> cells;
  for (auto mode : {LossMode::kCePlusBns, LossMode::kCeOnly,
                    LossMode::kBnsOnly}) {
    for (auto seed : cfg.seeds) {
      PlanCell c;
      c.method = Method::kDfQat;
      c.bits = 8;
      c.loss_mode = mode;
      c.seed = seed;
      cells.push_back(c);
    }
  }
  return cells;
}

std::vector<PlanCell> full_cells(const TrainConfig& cfg) {
  auto cells = table1_cells(cfg);
  std::set<std::string> ids;
  for (const auto& c : cells) ids.insert(c.id());
  for (const auto& c : ablation_cells(cfg)) {
    if (ids.insert(c.id()).second) cells.push_back(c);
  }
  PlanCell frozen;
  frozen.method = Method::kDfQat;
  frozen.bits = 8;
  frozen.seed = cfg.seeds.front();
  frozen.continue_generator_updates = false;
  cells.push_back(frozen);
  return cells;
}

// ---------------------------------------------------------------------------

std::string MetricsRecord::to_json() const {
  json j = {{"cell_id", cell_id},
            {"kind", kind},
            {"method", method},
            {"loss_mode", loss_mode},
            {"bits", bits},
            {"seed", seed},
            {"continue_generator_updates", continue_generator_updates},
            {"accuracy", accuracy},
            {"fidelity", fidelity},
            {"bns", bns},
            {"loss_curve", loss_curve},
            {"accuracy_curve", accuracy_curve},
            {"wall_clock", wall_clock},
            {"config_digest", config_digest},
            {"code_version", code_version},
            {"training_reads", training_reads},
            {"artifacts", artifacts}};
  return j.dump();
}

MetricsRecord MetricsRecord::from_json(const std::string& line) {
  MetricsRecord r;
  try {
    auto j = json::parse(line);
    r.cell_id = j.at("cell_id");
    r.kind = j.at("kind");
    r.method = j.value("method", "");
    r.loss_mode = j.value("loss_mode", "");
    r.bits = j.value("bits", 0);
    r.seed = j.value("seed", uint64_t{0});
    r.continue_generator_updates = j.value("continue_generator_updates", true);
    r.accuracy = num_or_nan(j, "accuracy");
    r.fidelity = num_or_nan(j, "fidelity");
    r.bns = num_or_nan(j, "bns");
    for (const auto& v : j.value("loss_curve", json::array())) {
      r.loss_curve.push_back(v.is_null() ? NAN : v.get<double>());
    }
    for (const auto& v : j.value("accuracy_curve", json::array())) {
      r.accuracy_curve.push_back(v.is_null() ? NAN : v.get<double>());
    }
    r.wall_clock = j.value("wall_clock", 0.0);
    r.config_digest = j.at("config_digest");
    r.code_version = j.value("code_version", "");
    r.training_reads = j.value("training_reads", int64_t{0});
    r.artifacts = j.value("artifacts", std::vector<std::string>{});
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, std::string("malformed metrics record: ") + e.what());
  }
  return r;
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    if (a.n == 0) {
      a.mean = 0;
      a.min = v;
      a.max = v;
    }
    a.mean += v;
    a.min = std::min(a.min, v);
    a.max = std::max(a.max, v);
    ++a.n;
  }
  if (a.n > 0) a.mean /= static_cast<double>(a.n);
  return a;
}

Aggregate PlanResult::accuracy(Method m, int bits, LossMode mode,
                               bool continue_generator_updates) const {
  std::vector<double> v;
  for (const auto& [id, r] : records) {
    if (r.kind != "cell" || r.method != method_name(m) || r.bits != bits) {
      continue;
    }
    if (is_data_free(m) && r.loss_mode != loss_mode_name(mode)) continue;
    if (m == Method::kDfQat &&
        r.continue_generator_updates != continue_generator_updates) {
      continue;
    }
    v.push_back(r.accuracy);
  }
  return aggregate(v);
}

Aggregate PlanResult::fidelity(LossMode mode) const {
  std::vector<double> v;
  for (const auto& [id, r] : records) {
    if (r.kind == "generator" && r.loss_mode == loss_mode_name(mode)) {
      v.push_back(r.fidelity);
    }
  }
  return aggregate(v);
}

Aggregate PlanResult::generator_bns(LossMode mode) const {
  std::vector<double> v;
  for (const auto& [id, r] : records) {
    if (r.kind == "generator" && r.loss_mode == loss_mode_name(mode)) {
      v.push_back(r.bns);
    }
  }
  return aggregate(v);
}

double PlanResult::teacher_accuracy() const {
  auto it = records.find("teacher");
  return it == records.end() ? std::numeric_limits<double>::quiet_NaN()
                             : it->second.accuracy;
}

// ---------------------------------------------------------------------------

std::string render_text_table(
    const std::vector<std::string>& header,
    const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  auto widen = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) {
      width[i] = std::max(width[i], row[i].size());
    }
  };
  widen(header);
  for (const auto& r : rows) widen(r);
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < width.size(); ++i) {
      const std::string cell = i < row.size() ? row[i] : "";
      os << (i == 0 ? "" : "  ");
      if (i == 0) {
        os << std::left << std::setw(static_cast<int>(width[i])) << cell;
      } else {
        os << std::right << std::setw(static_cast<int>(width[i])) << cell;
      }
    }
    os << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  os << std::string(total > 2 ? total - 2 : 0, '-') << '\n';
  for (const auto& r : rows) line(r);
  return os.str();
}

namespace {

std::string pct(double v) {
  if (!std::isfinite(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

std::string pct_range(const Aggregate& a) {
  if (a.n == 0) return "-";
  if (a.n == 1) return pct(a.mean);
  return pct(a.mean) + " [" + pct(a.min) + ", " + pct(a.max) + "]";
}

std::string csv_join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += v[i];
  }
  return s + "\n";
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::vector<InvariantCheck> check_invariants(const PlanResult& r,
                                             const ExperimentPlan& plan) {
  std::vector<InvariantCheck> out;
  for (int bits : {8, 6}) {
    auto ptq = r.accuracy(Method::kDfPtq, bits);
    auto qat = r.accuracy(Method::kDfQat, bits);
    if (ptq.n == 0 || qat.n == 0) continue;
    InvariantCheck c;
    c.name = "DF-QAT >= DF-PTQ (" + plan.config.teacher.arch + ", INT" +
             std::to_string(bits) + ")";
    c.pass = qat.mean >= ptq.mean;
    c.detail = pct(qat.mean) + " vs " + pct(ptq.mean);
    out.push_back(c);
  }
  return out;
}

}  // namespace

RenderedTable render_table1(const PlanResult& r, const ExperimentPlan& plan) {
  const std::vector<std::string> header = {
      "model", "bits", "FP32", "DF-PTQ", "DF-QAT", "DD-PTQ", "DD-QAT",
      "DF-QAT>=DF-PTQ"};
  std::vector<std::vector<std::string>> text_rows;
  std::string csv = csv_join({"model", "bits", "fp32", "df_ptq_mean",
                              "df_ptq_min", "df_ptq_max", "df_qat_mean",
                              "df_qat_min", "df_qat_max", "dd_ptq_mean",
                              "dd_ptq_min", "dd_ptq_max", "dd_qat_mean",
                              "dd_qat_min", "dd_qat_max", "df_qat_ge_df_ptq"});
  std::set<int, std::greater<>> bits_set;
  for (const auto& c : plan.cells) bits_set.insert(c.bits);
  for (int bits : bits_set) {
    std::vector<std::string> row = {plan.config.teacher.arch,
                                    "INT" + std::to_string(bits),
                                    pct(r.teacher_accuracy())};
    std::vector<std::string> crow = {plan.config.teacher.arch,
                                     std::to_string(bits),
                                     fixed(r.teacher_accuracy(), 6)};
    Aggregate ptq, qat;
    for (auto m : {Method::kDfPtq, Method::kDfQat, Method::kDdPtq,
                   Method::kDdQat}) {
      auto a = r.accuracy(m, bits);
      if (m == Method::kDfPtq) ptq = a;
      if (m == Method::kDfQat) qat = a;
      row.push_back(pct_range(a));
      crow.push_back(fixed(a.mean, 6));
      crow.push_back(fixed(a.min, 6));
      crow.push_back(fixed(a.max, 6));
    }
    std::string flag = "-";
    if (ptq.n > 0 && qat.n > 0) flag = qat.mean >= ptq.mean ? "PASS" : "FAIL";
    row.push_back(flag);
    crow.push_back(flag);
    text_rows.push_back(row);
    csv += csv_join(crow);
  }
  return {csv, render_text_table(header, text_rows)};
}

RenderedTable render_table2(const PlanResult& r, const ExperimentPlan& plan) {
  (void)plan;
  const std::vector<std::string> header = {"data", "weight", "activation",
                                           "accuracy", "label fidelity"};
  std::vector<std::vector<std::string>> rows;
  std::string csv = csv_join({"data", "weight", "activation", "accuracy_mean",
                              "accuracy_min", "accuracy_max", "fidelity_mean"});
  auto add = [&](const std::string& name, const std::string& w,
                 const std::string& a, const Aggregate& acc,
                 const Aggregate& fid) {
    if (acc.n == 0) return;
    rows.push_back({name, w, a, pct_range(acc),
                    fid.n ? fixed(fid.mean, 3) : "-"});
    csv += csv_join({name, w, a, fixed(acc.mean, 6), fixed(acc.min, 6),
                     fixed(acc.max, 6), fid.n ? fixed(fid.mean, 6) : ""});
  };
  Aggregate none;
  add("Teacher (original data)", "FL32", "FL32",
      aggregate({r.teacher_accuracy()}), none);
  for (auto mode : {LossMode::kCePlusBns, LossMode::kCeOnly,
                    LossMode::kBnsOnly}) {
    std::string label = loss_mode_name(mode);
    std::transform(label.begin(), label.end(), label.begin(), ::toupper);
    add("Synthetic (" + label + ")", "INT8", "INT8",
        r.accuracy(Method::kDfQat, 8, mode), r.fidelity(mode));
  }
  add("Synthetic (CE+BNS, frozen generator)", "INT8", "INT8",
      r.accuracy(Method::kDfQat, 8, LossMode::kCePlusBns, false), none);
  add("Original data (DD-QAT)", "INT8", "INT8",
      r.accuracy(Method::kDdQat, 8), none);
  return {csv, render_text_table(header, rows)};
}

// ---------------------------------------------------------------------------

namespace {

// Splits are loaded once per plan; every logical access goes through the
// caller's audit so embargoed reads fail before any data is returned.
class DataSource {
 public:
  DataSource(std::string dataset, IngestOptions io)
      : dataset_(std::move(dataset)), io_(std::move(io)) {}

  const LabeledImages& get(Split s, DataAccessAudit& audit) {
    audit.record(dataset_, s);
    auto& slot = cache_[static_cast<int>(s)];
    if (!slot) slot = std::make_unique<LabeledImages>(
                   ingest_dataset(dataset_, s, io_, nullptr));
    return *slot;
  }

 private:
  std::string dataset_;
  IngestOptions io_;
  std::unique_ptr<LabeledImages> cache_[2];
};

std::string section_json(const TrainConfig& cfg, const char* key) {
  return json::parse(cfg.to_json()).at(key).dump();
}

std::string sanitize(std::string id) {
  for (auto& ch : id) {
    if (ch == '/') ch = '_';
  }
  return id;
}

class PlanRunner {
 public:
  PlanRunner(const ExperimentPlan& plan, const PlanRunOptions& options)
      : plan_(plan),
        opts_(options),
        out_(plan.output_dir),
        data_(plan.config.teacher.dataset,
              IngestOptions{plan.data_dir, plan.config.teacher.image_size}) {
    DFQ_CHECK(!plan.output_dir.empty(), ErrorCode::kInvalidArgument,
              "plan needs an output directory");
    DFQ_CHECK(!plan.cells.empty(), ErrorCode::kInvalidArgument,
              "plan has no cells");
    plan.config.validate();
    fs::create_directories(out_);
    load_records();
  }

  PlanResult run() {
    write_text_file((out_ / "plan.json").string(), plan_.to_json() + "\n");
    result_.complete = false;
    if (!run_teacher()) return finish();
    std::vector<std::pair<LossMode, uint64_t>> gens;
    for (const auto& c : plan_.cells) {
      if (!is_data_free(c.method)) continue;
      std::pair<LossMode, uint64_t> key{c.loss_mode, c.seed};
      if (std::find(gens.begin(), gens.end(), key) == gens.end()) {
        gens.push_back(key);
      }
    }
    for (const auto& [mode, seed] : gens) {
      if (!run_generator(mode, seed)) return finish();
    }
    for (const auto& c : plan_.cells) {
      if (!run_cell(c)) return finish();
    }
    result_.complete = true;
    return finish();
  }

  PlanResult load_only() {
    result_.complete = true;
    for (const auto& c : plan_.cells) {
      if (!result_.records.count(c.id())) result_.complete = false;
    }
    write_tables();
    return result_;
  }

 private:
  void log(const std::string& msg) {
    if (opts_.log) opts_.log(msg);
  }

  void load_records() {
    const auto path = out_ / "metrics.jsonl";
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto r = MetricsRecord::from_json(line);
      result_.records[r.cell_id] = r;
    }
  }

  bool up_to_date(const std::string& id, const std::string& digest) const {
    auto it = result_.records.find(id);
    if (it == result_.records.end() || it->second.config_digest != digest) {
      return false;
    }
    for (const auto& a : it->second.artifacts) {
      if (!fs::exists(out_ / a)) return false;
    }
    return true;
  }

  // False when the run must stop here.
  bool budget_left() const {
    return opts_.stop_after < 0 || result_.executed < opts_.stop_after;
  }

  void append(const MetricsRecord& r, const DataAccessAudit& audit) {
    {
      std::ofstream out(out_ / "metrics.jsonl", std::ios::app);
      DFQ_CHECK(out.good(), ErrorCode::kIo, "cannot append metrics.jsonl");
      out << r.to_json() << '\n';
    }
    {
      std::ofstream out(out_ / "audit.jsonl", std::ios::app);
      DFQ_CHECK(out.good(), ErrorCode::kIo, "cannot append audit.jsonl");
      for (const auto& e : audit.events()) {
        out << json{{"cell_id", r.cell_id},
                    {"dataset", e.dataset},
                    {"split", split_name(e.split)},
                    {"denied", e.denied},
                    {"embargoed", audit.training_embargoed()}}
                   .dump()
            << '\n';
      }
      if (audit.events().empty()) {
        out << json{{"cell_id", r.cell_id},
                    {"dataset", nullptr},
                    {"split", nullptr},
                    {"denied", false},
                    {"embargoed", audit.training_embargoed()}}
                   .dump()
            << '\n';
      }
    }
    result_.records[r.cell_id] = r;
    ++result_.executed;
  }

  MetricsRecord base_record(const std::string& id, const std::string& kind,
                            const std::string& digest) const {
    MetricsRecord r;
    r.cell_id = id;
    r.kind = kind;
    r.config_digest = digest;
    r.code_version = code_version();
    return r;
  }

  bool run_teacher() {
    const std::string digest =
        sha256_hex("teacher|" + section_json(plan_.config, "teacher") + "|" +
                   plan_.teacher_path);
    teacher_digest_ = digest;
    const std::string rel = "teacher/teacher.pt";
    if (up_to_date("teacher", digest)) {
      ++result_.skipped;
      auto path = plan_.teacher_path.empty() ? (out_ / rel).string()
                                             : plan_.teacher_path;
      teacher_ = load_teacher(path).first;
      log("teacher: up to date");
      return true;
    }
    if (!budget_left()) return false;
    const auto t0 = std::chrono::steady_clock::now();
    DataAccessAudit audit;
    auto r = base_record("teacher", "teacher", digest);
    const auto& test = data_.get(Split::kTest, audit);
    if (!plan_.teacher_path.empty()) {
      log("teacher: loading " + plan_.teacher_path);
      auto [model, manifest] = load_teacher(plan_.teacher_path);
      teacher_ = model;
      r.accuracy = evaluate(teacher_, test);
    } else {
      log("teacher: training " + plan_.config.teacher.arch);
      const auto& train = data_.get(Split::kTrain, audit);
      auto trained = build_desk_teacher(plan_.config.teacher, train, test);
      teacher_ = trained.model;
      r.accuracy = trained.accuracy;
      for (const auto& h : trained.history) {
        r.loss_curve.push_back(h.loss);
        r.accuracy_curve.push_back(h.test_accuracy);
      }
      TeacherManifest m;
      m.arch = teacher_->arch();
      m.dataset = plan_.config.teacher.dataset;
      m.normalization = train.info.normalization;
      m.accuracy = trained.accuracy;
      save_teacher((out_ / rel).string(), teacher_, m);
      r.artifacts = {rel, rel + ".json"};
    }
    r.training_reads = audit.training_reads();
    r.wall_clock = seconds_since(t0);
    append(r, audit);
    log("teacher: accuracy " + pct(r.accuracy));
    return true;
  }

  std::string generator_id(LossMode mode, uint64_t seed) const {
    return "generator/" + loss_mode_name(mode) + "/s" + std::to_string(seed);
  }

  std::string generator_rel(LossMode mode, uint64_t seed) const {
    return "generators/" + loss_mode_name(mode) + "-s" + std::to_string(seed);
  }

  std::string generator_digest(LossMode mode, uint64_t seed) const {
    return sha256_hex(teacher_digest_ + "|" +
                      section_json(plan_.config, "generator") + "|" +
                      loss_mode_name(mode) + "|" + std::to_string(seed) + "|" +
                      std::to_string(plan_.config.calibration.samples));
  }

  bool run_generator(LossMode mode, uint64_t seed) {
    const auto id = generator_id(mode, seed);
    const auto digest = generator_digest(mode, seed);
    if (up_to_date(id, digest)) {
      ++result_.skipped;
      log(id + ": up to date");
      return true;
    }
    if (!budget_left()) return false;
    log(id + ": training");
    const auto t0 = std::chrono::steady_clock::now();
    DataAccessAudit audit;
    audit.set_training_embargo(true);
    auto r = base_record(id, "generator", digest);
    r.loss_mode = loss_mode_name(mode);
    r.seed = seed;

    const auto& info = dataset_info(plan_.config.teacher.dataset);
    GeneratorSpec gs;
    gs.noise_dim = plan_.config.generator_shape.noise_dim;
    gs.base_channels = plan_.config.generator_shape.base_channels;
    gs.num_classes = teacher_->arch().num_classes;
    gs.channels = teacher_->arch().in_channels;
    gs.height = teacher_->arch().height;
    gs.width = teacher_->arch().width;
    gs.normalization = info.normalization;
    ZsCganConfig zc = plan_.config.generator;
    zc.loss_mode = mode;
    zc.seed = seed;
    torch::manual_seed(seed);
    ConditionalGenerator g(gs);
    ZsCganTrainer trainer(g, teacher_, zc);
    auto report = trainer.run();
    for (const auto& e : report.epochs) r.loss_curve.push_back(e.total);
    r.bns = report.epochs.empty() ? NAN : report.epochs.back().bns;
    r.fidelity = label_fidelity(g, teacher_, plan_.config.calibration.samples,
                                seed + 7919);

    const auto rel = generator_rel(mode, seed);
    GeneratorManifest m;
    m.spec = gs;
    m.config = zc;
    m.teacher_digest = state_digest(*teacher_);
    m.fidelity = r.fidelity;
    save_generator((out_ / (rel + ".pt")).string(), g, m,
                   &trainer.optimizer());
    write_text_file((out_ / (rel + ".csv")).string(), report.to_csv());
    std::vector<int64_t> classes(gs.num_classes);
    for (int64_t k = 0; k < gs.num_classes; ++k) classes[k] = k;
    GridOptions go;
    go.seed = seed;
    go.class_names = info.class_names;
    export_sample_grid(g, teacher_, classes, 8, (out_ / (rel + ".png")).string(),
                       go);
    r.artifacts = {rel + ".pt", rel + ".pt.json", rel + ".pt.adam",
                   rel + ".csv", rel + ".png"};
    r.training_reads = audit.training_reads();
    r.wall_clock = seconds_since(t0);
    append(r, audit);
    log(id + ": fidelity " + fixed(r.fidelity, 4) + ", bns " +
        fixed(r.bns, 4));
    return true;
  }

  bool run_cell(const PlanCell& c) {
    const auto id = c.id();
    std::string digest_src = plan_.config.to_json() + "|" + id + "|" +
                             teacher_digest_;
    if (is_data_free(c.method)) {
      digest_src += "|" + generator_digest(c.loss_mode, c.seed);
    }
    const auto digest = sha256_hex(digest_src);
    if (up_to_date(id, digest)) {
      ++result_.skipped;
      log(id + ": up to date");
      return true;
    }
    if (!budget_left()) return false;
    log(id + ": running");
    const auto t0 = std::chrono::steady_clock::now();
    DataAccessAudit audit;
    audit.set_training_embargo(is_data_free(c.method));
    auto r = base_record(id, "cell", digest);
    r.method = method_name(c.method);
    r.bits = c.bits;
    r.seed = c.seed;
    r.loss_mode = is_data_free(c.method) ? loss_mode_name(c.loss_mode) : "";
    r.continue_generator_updates =
        c.method == Method::kDfQat ? c.continue_generator_updates : false;

    const auto& test = data_.get(Split::kTest, audit);
    const auto dir = "cells/" + sanitize(id);
    torch::manual_seed(c.seed);
    StudentModel student(Classifier(teacher_->arch()), {}, {});
    DistillReport report;
    bool has_report = false;
    auto eval_fn = [&](StudentModel& s) { return evaluate(s, test); };

    if (is_data_free(c.method)) {
      const auto grel = generator_rel(c.loss_mode, c.seed) + ".pt";
      auto [g, gm] = load_generator((out_ / grel).string());
      auto syn = sample_synthetic(g, teacher_, plan_.config.calibration.samples,
                                  c.seed + 101);
      student = calibrate_student(
          teacher_, split_batches(syn.images, plan_.config.calibration.batch_size),
          c.bits, plan_.config.calibration);
      if (c.method == Method::kDfQat) {
        ZsCganConfig zc = gm.config;
        zc.batch_size = plan_.config.kd.batch_size;
        zc.seed = c.seed + 211;
        ZsCganTrainer trainer(g, teacher_, zc);
        load_generator_optimizer((out_ / grel).string(), trainer.optimizer());
        KDConfig kc = plan_.config.kd;
        kc.data_free = true;
        kc.lambda = 1.0;
        kc.seed = c.seed;
        kc.continue_generator_updates = c.continue_generator_updates;
        report = train_data_free_qat(student, teacher_, trainer, kc, eval_fn);
        has_report = true;
      }
    } else {
      const auto& train = data_.get(Split::kTrain, audit);
      const int64_t n =
          std::min<int64_t>(plan_.config.calibration.samples, train.size());
      student = calibrate_student(
          teacher_,
          split_batches(train.images.narrow(0, 0, n),
                        plan_.config.calibration.batch_size),
          c.bits, plan_.config.calibration);
      if (c.method == Method::kDdQat) {
        KDConfig kc = plan_.config.kd;
        kc.seed = c.seed;
        report = train_data_dependent_qat(student, teacher_, train, kc,
                                          eval_fn);
        has_report = true;
      }
    }
    r.accuracy = evaluate(student, test);
    StudentManifest sm;
    sm.arch = teacher_->arch();
    sm.dataset = plan_.config.teacher.dataset;
    sm.method = r.method;
    sm.bits = c.bits;
    sm.accuracy = r.accuracy;
    sm.teacher_digest = state_digest(*teacher_);
    save_student((out_ / dir / "student.pt").string(), student, sm);
    r.artifacts = {dir + "/student.pt", dir + "/student.pt.json",
                   dir + "/student.pt.spec.json"};
    if (has_report) {
      for (const auto& e : report.epochs) {
        r.loss_curve.push_back(e.kd_loss);
        r.accuracy_curve.push_back(e.accuracy);
      }
      write_text_file((out_ / dir / "report.csv").string(), report.to_csv());
      r.artifacts.push_back(dir + "/report.csv");
    }
    r.training_reads = audit.training_reads();
    r.wall_clock = seconds_since(t0);
    append(r, audit);
    log(id + ": accuracy " + pct(r.accuracy) + " (" +
        fixed(r.wall_clock, 1) + " s)");
    return true;
  }

  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }

  void write_tables() {
    result_.invariants = check_invariants(result_, plan_);
    std::string csv =
        "cell_id,method,bits,loss_mode,seed,continue_generator_updates,"
        "accuracy,training_reads,wall_clock\n";
    for (const auto& c : plan_.cells) {
      auto it = result_.records.find(c.id());
      if (it == result_.records.end()) continue;
      const auto& r = it->second;
      csv += csv_join({r.cell_id, r.method, std::to_string(r.bits),
                       r.loss_mode, std::to_string(r.seed),
                       r.continue_generator_updates ? "1" : "0",
                       fixed(r.accuracy, 6), std::to_string(r.training_reads),
                       fixed(r.wall_clock, 2)});
    }
    write_text_file((out_ / "results.csv").string(), csv);
    std::string gcsv = "cell_id,loss_mode,seed,fidelity,bns\n";
    for (const auto& [id, r] : result_.records) {
      if (r.kind != "generator") continue;
      gcsv += csv_join({id, r.loss_mode, std::to_string(r.seed),
                        fixed(r.fidelity, 6), fixed(r.bns, 6)});
    }
    write_text_file((out_ / "generators.csv").string(), gcsv);
    auto t1 = render_table1(result_, plan_);
    auto t2 = render_table2(result_, plan_);
    write_text_file((out_ / "table1.csv").string(), t1.csv);
    write_text_file((out_ / "table1.txt").string(), t1.text);
    write_text_file((out_ / "table2.csv").string(), t2.csv);
    write_text_file((out_ / "table2.txt").string(), t2.text);
  }

  PlanResult finish() {
    write_tables();
    return result_;
  }

  const ExperimentPlan& plan_;
  PlanRunOptions opts_;
  fs::path out_;
  DataSource data_;
  Classifier teacher_{nullptr};
  std::string teacher_digest_;
  PlanResult result_;
};

}  // namespace

PlanResult run_plan(const ExperimentPlan& plan, const PlanRunOptions& options) {
  PlanRunner runner(plan, options);
  return runner.run();
}

PlanResult load_plan_result(const ExperimentPlan& plan) {
  PlanRunner runner(plan, {});
  return runner.load_only();
}

}  // namespace dfq

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

#include "dfq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "dfq/error.hpp"

namespace dfq {

torch::Tensor round_half_away(const torch::Tensor& v) {
  // v - trunc(v) is exact in floating point, so ties are detected exactly.
  auto t = torch::trunc(v);
  auto frac = v - t;
  return torch::where(frac.abs() >= 0.5, t + torch::sign(v), t);
}

QuantParams compute_qparams(double min, double max, int bits) {
  DFQ_CHECK(std::isfinite(min) && std::isfinite(max), ErrorCode::kNumeric,
            "compute_qparams: non-finite range");
  DFQ_CHECK(min <= max, ErrorCode::kInvalidArgument,
            "compute_qparams: min > max");
  DFQ_CHECK(bits == 6 || bits == 8, ErrorCode::kInvalidArgument,
            "compute_qparams: bit width must be 6 or 8, got " +
                std::to_string(bits));
  QuantParams p;
  p.num_bits = bits;
  p.qmin = 0;
  p.qmax = (int64_t{1} << bits) - 1;
  double lo = std::min(min, 0.0);
  double hi = std::max(max, 0.0);
  if (lo == hi) {
    // Only reachable for lo == hi == 0 once zero is forced into range.
    p.scale = 1.0;
    p.zero_point = 0;
    p.observed_min = lo;
    p.observed_max = hi;
    return p;
  }
  p.observed_min = lo;
  p.observed_max = hi;
  p.scale = (hi - lo) / static_cast<double>(p.qmax - p.qmin);
  if (!(p.scale > 0)) {
    // Range too narrow to produce a positive scale in double precision.
    lo -= 1e-8;
    hi += 1e-8;
    p.observed_min = lo;
    p.observed_max = hi;
    p.scale = (hi - lo) / static_cast<double>(p.qmax - p.qmin);
  }
  const double zp = std::round(static_cast<double>(p.qmin) - lo / p.scale);
  p.zero_point = std::clamp(static_cast<int64_t>(zp), p.qmin, p.qmax);
  return p;
}

torch::Tensor quantize(const torch::Tensor& x, const QuantParams& p) {
  auto q = round_half_away(x / p.scale) + static_cast<double>(p.zero_point);
  return q.clamp(static_cast<double>(p.qmin), static_cast<double>(p.qmax))
      .to(torch::kInt);
}

torch::Tensor dequantize(const torch::Tensor& q, const QuantParams& p,
                         torch::Dtype dtype) {
  return (q.to(dtype) - static_cast<double>(p.zero_point)) * p.scale;
}

namespace {

class FakeQuantFunction
    : public torch::autograd::Function<FakeQuantFunction> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx,
                               const torch::Tensor& x, double scale,
                               int64_t zero_point, int64_t qmin, int64_t qmax,
                               double lo, double hi) {
    QuantParams p;
    p.scale = scale;
    p.zero_point = zero_point;
    p.qmin = qmin;
    p.qmax = qmax;
    ctx->save_for_backward({(x >= lo) & (x <= hi)});
    return dequantize(quantize(x, p), p, x.scalar_type());
  }

  static torch::autograd::variable_list backward(
      torch::autograd::AutogradContext* ctx,
      torch::autograd::variable_list grad_out) {
    auto mask = ctx->get_saved_variables()[0];
    auto g = grad_out[0] * mask.to(grad_out[0].scalar_type());
    return {g,
            torch::Tensor(),
            torch::Tensor(),
            torch::Tensor(),
            torch::Tensor(),
            torch::Tensor(),
            torch::Tensor()};
  }
};

}  // namespace

torch::Tensor fake_quant(const torch::Tensor& x, const QuantParams& p) {
  return FakeQuantFunction::apply(x, p.scale, p.zero_point, p.qmin, p.qmax,
                                  p.observed_min, p.observed_max);
}

// ---------------------------------------------------------------------------

void RangeAccumulator::observe(const std::string& site,
                               const torch::Tensor& t) {
  DFQ_CHECK(t.numel() > 0, ErrorCode::kInvalidArgument,
            "cannot observe an empty tensor at " + site);
  auto d = t.detach();
  observe(site, d.min().item<double>(), d.max().item<double>());
}

void RangeAccumulator::observe(const std::string& site, double lo, double hi) {
  DFQ_CHECK(std::isfinite(lo) && std::isfinite(hi), ErrorCode::kNumeric,
            "non-finite activation range at " + site);
  auto it = ranges_.find(site);
  if (it == ranges_.end()) {
    ranges_.emplace(site, std::make_pair(lo, hi));
    order_.push_back(site);
    return;
  }
  it->second.first = std::min(it->second.first, lo);
  it->second.second = std::max(it->second.second, hi);
}

void RangeAccumulator::merge(const RangeAccumulator& other) {
  for (const auto& site : other.order_) {
    const auto& [lo, hi] = other.ranges_.at(site);
    observe(site, lo, hi);
  }
}

bool RangeAccumulator::contains(const std::string& site) const {
  return ranges_.count(site) > 0;
}

std::pair<double, double> RangeAccumulator::range(
    const std::string& site) const {
  auto it = ranges_.find(site);
  DFQ_CHECK(it != ranges_.end(), ErrorCode::kStructure,
            "no range observed at site " + site);
  return it->second;
}

// ---------------------------------------------------------------------------

void QuantizedModelSpec::set(const std::string& site, SiteKind kind,
                             const QuantParams& p) {
  auto it = index_.find(site);
  if (it != index_.end()) {
    sites_[it->second] = {site, kind, p};
    return;
  }
  index_[site] = sites_.size();
  sites_.push_back({site, kind, p});
}

const SiteQuant* QuantizedModelSpec::find(const std::string& site) const {
  auto it = index_.find(site);
  return it == index_.end() ? nullptr : &sites_[it->second];
}

SiteQuant* QuantizedModelSpec::find(const std::string& site) {
  auto it = index_.find(site);
  return it == index_.end() ? nullptr : &sites_[it->second];
}

std::string QuantizedModelSpec::to_json() const {
  auto rows = nlohmann::json::array();
  for (const auto& s : sites_) {
    rows.push_back(
        {{"site", s.site},
         {"kind", s.kind == SiteKind::kWeight ? "weight" : "activation"},
         {"bits", s.params.num_bits},
         {"scale", s.params.scale},
         {"zero_point", s.params.zero_point},
         {"min", s.params.observed_min},
         {"max", s.params.observed_max}});
  }
  return rows.dump(2);
}

QuantizedModelSpec QuantizedModelSpec::from_json(const std::string& text) {
  nlohmann::json rows;
  try {
    rows = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument,
         std::string("quant spec is not valid JSON: ") + e.what());
  }
  DFQ_CHECK(rows.is_array(), ErrorCode::kInvalidArgument,
            "quant spec must be a JSON array");
  QuantizedModelSpec spec;
  try {
    for (const auto& r : rows) {
      const auto kind = r.at("kind").get<std::string>();
      DFQ_CHECK(kind == "weight" || kind == "activation",
                ErrorCode::kInvalidArgument,
                "unknown site kind '" + kind + "'");
      QuantParams p;
      p.num_bits = r.at("bits").get<int>();
      DFQ_CHECK(p.num_bits == 6 || p.num_bits == 8,
                ErrorCode::kInvalidArgument, "bit width must be 6 or 8");
      p.qmin = 0;
      p.qmax = (int64_t{1} << p.num_bits) - 1;
      p.scale = r.at("scale").get<double>();
      p.zero_point = r.at("zero_point").get<int64_t>();
      p.observed_min = r.at("min").get<double>();
      p.observed_max = r.at("max").get<double>();
      DFQ_CHECK(p.scale > 0 && p.zero_point >= p.qmin &&
                    p.zero_point <= p.qmax,
                ErrorCode::kInvalidArgument,
                "invalid quant parameters for site " +
                    r.at("site").get<std::string>());
      spec.set(r.at("site").get<std::string>(),
               kind == "weight" ? SiteKind::kWeight : SiteKind::kActivation,
               p);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument,
         std::string("malformed quant spec: ") + e.what());
  }
  return spec;
}

// ---------------------------------------------------------------------------

std::vector<std::string> io_sites(Classifier model) {
  auto weights = model->weight_sites();
  return {"input", weights.front().first, weights.back().first, "logits"};
}

namespace {

class RangeObserver : public ForwardHooks {
 public:
  explicit RangeObserver(RangeAccumulator& acc) : acc_(acc) {}
  torch::Tensor activation(const std::string& site,
                           const torch::Tensor& a) override {
    acc_.observe(site, a);
    return a;
  }

 private:
  RangeAccumulator& acc_;
};

int bits_for(const std::string& site, const CalibrationOptions& options,
             const std::vector<std::string>& io) {
  if (options.keep_io_8bit &&
      std::find(io.begin(), io.end(), site) != io.end()) {
    return 8;
  }
  return options.bits;
}

}  // namespace

RangeAccumulator observe_activation_ranges(
    Classifier model, const std::vector<torch::Tensor>& batches) {
  DFQ_CHECK(!batches.empty(), ErrorCode::kInvalidArgument,
            "calibration needs at least one batch");
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  RangeAccumulator acc;
  RangeObserver observer(acc);
  for (const auto& b : batches) model->forward(b, observer);
  model->train(was_training);
  return acc;
}

QuantizedModelSpec build_quant_spec(Classifier model,
                                    const RangeAccumulator& activations,
                                    const CalibrationOptions& options) {
  const auto io = io_sites(model);
  QuantizedModelSpec spec;
  for (const auto& [site, w] : model->weight_sites()) {
    auto d = w.detach();
    spec.set(site, SiteKind::kWeight,
             compute_qparams(d.min().item<double>(), d.max().item<double>(),
                             bits_for(site, options, io)));
  }
  for (const auto& site : model->activation_sites()) {
    const auto [lo, hi] = activations.range(site);
    spec.set(site, SiteKind::kActivation,
             compute_qparams(lo, hi, bits_for(site, options, io)));
  }
  return spec;
}

QuantizedModelSpec calibrate_ptq(Classifier model,
                                 const std::vector<torch::Tensor>& batches,
                                 const CalibrationOptions& options) {
  return build_quant_spec(model, observe_activation_ranges(model, batches),
                          options);
}

// ---------------------------------------------------------------------------

class StudentModel::Hooks : public ForwardHooks {
 public:
  Hooks(QuantizedModelSpec& spec, const StudentOptions& opts, bool training)
      : spec_(spec), opts_(opts), training_(training) {}

  torch::Tensor weight(const std::string& site,
                       const torch::Tensor& w) override {
    if (opts_.bypass) return w;
    auto* entry = lookup(site);
    if (training_) {
      auto d = w.detach();
      entry->params = compute_qparams(d.min().item<double>(),
                                      d.max().item<double>(),
                                      entry->params.num_bits);
    }
    return fake_quant(w, entry->params);
  }

  torch::Tensor activation(const std::string& site,
                           const torch::Tensor& a) override {
    if (opts_.bypass) return a;
    auto* entry = lookup(site);
    if (training_) {
      auto d = a.detach();
      const double decay = opts_.ema_decay;
      const auto& old = entry->params;
      const double lo = decay * old.observed_min +
                        (1.0 - decay) * d.min().item<double>();
      const double hi = decay * old.observed_max +
                        (1.0 - decay) * d.max().item<double>();
      entry->params = compute_qparams(lo, hi, old.num_bits);
    }
    return fake_quant(a, entry->params);
  }

 private:
  SiteQuant* lookup(const std::string& site) {
    auto* entry = spec_.find(site);
    DFQ_CHECK(entry != nullptr, ErrorCode::kStructure,
              "no quantization parameters for site " + site);
    return entry;
  }

  QuantizedModelSpec& spec_;
  const StudentOptions& opts_;
  bool training_;
};

StudentModel::StudentModel(Classifier net, QuantizedModelSpec spec,
                           StudentOptions opts)
    : net_(std::move(net)), spec_(std::move(spec)), opts_(opts) {
  // BN running statistics stay frozen: the graph always runs in evaluation
  // mode and training_ only governs range tracking.
  net_->eval();
}

torch::Tensor StudentModel::forward(const torch::Tensor& x) {
  Hooks hooks(spec_, opts_, training_);
  return net_->forward(x, hooks);
}

void StudentModel::train(bool on) {
  training_ = on;
  net_->eval();
}

bool StudentModel::is_training() const { return training_; }

void StudentModel::refresh_weight_params() {
  if (opts_.bypass) return;
  for (const auto& [site, w] : net_->weight_sites()) {
    auto* entry = spec_.find(site);
    DFQ_CHECK(entry != nullptr, ErrorCode::kStructure,
              "no quantization parameters for site " + site);
    auto d = w.detach();
    entry->params = compute_qparams(d.min().item<double>(),
                                    d.max().item<double>(),
                                    entry->params.num_bits);
  }
}

StudentModel apply_quant_spec(Classifier teacher,
                              const QuantizedModelSpec& spec,
                              const StudentOptions& options) {
  auto net = clone_classifier(teacher);
  if (options.fold_bn) net->fold_batch_norm();
  for (auto& p : net->parameters()) p.requires_grad_(true);
  if (!options.bypass) {
    std::string missing;
    for (const auto& [site, w] : net->weight_sites()) {
      const auto* e = spec.find(site);
      if (e == nullptr || e->kind != SiteKind::kWeight) missing += " " + site;
    }
    for (const auto& site : net->activation_sites()) {
      const auto* e = spec.find(site);
      if (e == nullptr || e->kind != SiteKind::kActivation) {
        missing += " " + site;
      }
    }
    DFQ_CHECK(missing.empty(), ErrorCode::kStructure,
              "quant spec does not cover sites:" + missing);
  }
  StudentModel student(std::move(net), spec, options);
  student.eval();
  return student;
}

}  // namespace dfq

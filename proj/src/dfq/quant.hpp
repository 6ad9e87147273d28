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

#ifndef DFQ_QUANT_HPP_
#define DFQ_QUANT_HPP_

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfq/classifier.hpp"

namespace dfq {

// Asymmetric affine per-tensor parameters on the grid [0, 2^bits - 1].
struct QuantParams {
  int num_bits = 8;
  int64_t qmin = 0;
  int64_t qmax = 255;
  double scale = 1.0;
  int64_t zero_point = 0;
  double observed_min = 0.0;  // always <= 0
  double observed_max = 0.0;  // always >= 0

  bool operator==(const QuantParams&) const = default;
};

// Round half away from zero (std::round semantics) for tensors.
torch::Tensor round_half_away(const torch::Tensor& v);

// Range is widened to include zero; min == max == 0 falls back to
// scale 1, zero point 0.
QuantParams compute_qparams(double min, double max, int bits);

// q = clamp(round(x / scale) + zero_point, qmin, qmax), returned as int32.
torch::Tensor quantize(const torch::Tensor& x, const QuantParams& p);
// (q - zero_point) * scale in `dtype`.
torch::Tensor dequantize(const torch::Tensor& q, const QuantParams& p,
                         torch::Dtype dtype = torch::kFloat);

// Forward: dequantize(quantize(x)). Backward: gradient passes unchanged
// where observed_min <= x <= observed_max and is zero elsewhere.
torch::Tensor fake_quant(const torch::Tensor& x, const QuantParams& p);

// Running per-site min/max. Shards merge by element-wise min/max.
class RangeAccumulator {
 public:
  void observe(const std::string& site, const torch::Tensor& t);
  void observe(const std::string& site, double lo, double hi);
  void merge(const RangeAccumulator& other);

  bool contains(const std::string& site) const;
  std::pair<double, double> range(const std::string& site) const;
  const std::vector<std::string>& order() const { return order_; }

 private:
  std::map<std::string, std::pair<double, double>> ranges_;
  std::vector<std::string> order_;
};

enum class SiteKind { kWeight, kActivation };

struct SiteQuant {
  std::string site;
  SiteKind kind = SiteKind::kActivation;
  QuantParams params;

  bool operator==(const SiteQuant&) const = default;
};

// One entry per quantizable site, in forward order.
class QuantizedModelSpec {
 public:
  void set(const std::string& site, SiteKind kind, const QuantParams& p);
  const SiteQuant* find(const std::string& site) const;
  SiteQuant* find(const std::string& site);
  const std::vector<SiteQuant>& sites() const { return sites_; }
  bool empty() const { return sites_.empty(); }

  // [{site, kind, bits, scale, zero_point, min, max}]
  std::string to_json() const;
  static QuantizedModelSpec from_json(const std::string& text);

  bool operator==(const QuantizedModelSpec& o) const {
    return sites_ == o.sites_;
  }

 private:
  std::vector<SiteQuant> sites_;
  std::map<std::string, std::size_t> index_;
};

struct CalibrationOptions {
  int bits = 8;
  // First conv weight, input site, last linear weight and logits site stay
  // at 8 bits regardless of `bits`.
  bool keep_io_8bit = false;
};

// Sites that keep_io_8bit pins to 8 bits for a given classifier.
std::vector<std::string> io_sites(Classifier model);

// Weight ranges come from each weight tensor; activation ranges are the
// running min/max over all calibration batches.
QuantizedModelSpec calibrate_ptq(Classifier model,
                                 const std::vector<torch::Tensor>& batches,
                                 const CalibrationOptions& options);

// Activation ranges only; shards can be merged before building a spec.
RangeAccumulator observe_activation_ranges(
    Classifier model, const std::vector<torch::Tensor>& batches);

QuantizedModelSpec build_quant_spec(Classifier model,
                                    const RangeAccumulator& activations,
                                    const CalibrationOptions& options);

struct StudentOptions {
  bool bypass = false;   // forward exactly as the float teacher
  bool fold_bn = false;  // fold BN into convs before quantizing
  double ema_decay = 0.99;
};

// Fake-quantized clone of a teacher. In training mode weight parameters
// follow the live weights and activation ranges follow an EMA of batch
// min/max; in evaluation mode the stored parameters are used as-is.
class StudentModel {
 public:
  StudentModel(Classifier net, QuantizedModelSpec spec, StudentOptions opts);

  torch::Tensor forward(const torch::Tensor& x);

  Classifier& net() { return net_; }
  const Classifier& net() const { return net_; }
  const QuantizedModelSpec& spec() const { return spec_; }
  const StudentOptions& options() const { return opts_; }

  void train(bool on = true);
  void eval() { train(false); }
  bool is_training() const;

  // Recompute weight parameters from the current weights.
  void refresh_weight_params();

 private:
  class Hooks;

  Classifier net_;
  QuantizedModelSpec spec_;
  StudentOptions opts_;
  bool training_ = false;
};

// Clones the teacher (trainable, BN statistics frozen), optionally folds
// BN, and attaches the quantization parameters. Missing sites raise kStructure.
StudentModel apply_quant_spec(Classifier teacher,
                              const QuantizedModelSpec& spec,
                              const StudentOptions& options = {});

}  // namespace dfq

#endif  // DFQ_QUANT_HPP_

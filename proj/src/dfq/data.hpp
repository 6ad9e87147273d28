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

#ifndef DFQ_DATA_HPP_
#define DFQ_DATA_HPP_

#include <torch/torch.h>

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "dfq/classifier.hpp"

namespace dfq {

enum class Split { kTrain, kTest };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct DatasetInfo {
  std::string name;
  int64_t num_classes = 0;
  int64_t channels = 0;
  int64_t native_size = 0;
  int64_t train_count = 0;
  int64_t test_count = 0;
  Normalization normalization;
  std::vector<std::string> class_names;
};

// Supported: "mnist" (IDX, 60000/10000), "mnist-subset" (IDX,
// 4000/1000), "cifar10" (binary batches, 50000/10000).
const DatasetInfo& dataset_info(const std::string& name);
std::vector<std::string> supported_datasets();

// Records every split read and can embargo the training split. Data-free
// runs embargo it; any attempt then fails with kDataFreeViolation.
class DataAccessAudit {
 public:
  struct Event {
    std::string dataset;
    Split split;
    bool denied;
  };

  void set_training_embargo(bool on);
  bool training_embargoed() const;

  // Throws kDataFreeViolation (after recording) for embargoed reads.
  void record(const std::string& dataset, Split split);

  int64_t training_reads() const;
  int64_t denied_reads() const;
  std::vector<Event> events() const;

 private:
  mutable std::mutex mu_;
  bool embargo_ = false;
  std::vector<Event> events_;
};

struct LabeledImages {
  torch::Tensor images;  // (N, C, S, S) float, normalized
  torch::Tensor labels;  // (N,) int64
  DatasetInfo info;

  int64_t size() const { return labels.defined() ? labels.size(0) : 0; }
};

struct IngestOptions {
  std::string data_dir;    // empty: $DFQ_DATA_DIR
  int64_t image_size = 0;  // 0: native resolution
};

// Reads a split, verifies counts (and SHA256SUMS when present or pinned),
// resizes and normalizes. Access is recorded in `audit` when given.
LabeledImages ingest_dataset(const std::string& name, Split split,
                             const IngestOptions& options,
                             DataAccessAudit* audit = nullptr);

std::string resolve_data_dir(const std::string& data_dir);

// Maps raw pixels in [0, 1] to the requested size: 28x28 inputs are
// zero-padded to 32x32 first, then area-resampled.
torch::Tensor resize_images(const torch::Tensor& pixels, int64_t size);

torch::Tensor normalize_images(const torch::Tensor& pixels,
                               const Normalization& n);
torch::Tensor denormalize_images(const torch::Tensor& images,
                                 const Normalization& n);

at::Generator make_rng(uint64_t seed);

}  // namespace dfq

#endif  // DFQ_DATA_HPP_

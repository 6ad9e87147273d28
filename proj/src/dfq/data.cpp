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

#include "dfq/data.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dfq/digest.hpp"
#include "dfq/error.hpp"

namespace F = torch::nn::functional;
namespace fs = std::filesystem;

namespace dfq {

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  fail(ErrorCode::kInvalidArgument,
       "unknown split '" + s + "' (expected train or test)");
}

namespace {

const std::map<std::string, DatasetInfo>& registry() {
  static const std::map<std::string, DatasetInfo> kDatasets = [] {
    std::vector<std::string> digits;
    for (int i = 0; i < 10; ++i) digits.push_back(std::to_string(i));
    Normalization mnist_norm{{0.1307}, {0.3081}};
    std::map<std::string, DatasetInfo> m;
    m["mnist"] = {"mnist", 10, 1, 28, 60000, 10000, mnist_norm, digits};
    m["mnist-subset"] = {"mnist-subset", 10, 1, 28, 4000, 1000, mnist_norm,
                         digits};
    m["cifar10"] = {"cifar10",
                    10,
                    3,
                    32,
                    50000,
                    10000,
                    {{0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}},
                    {"airplane", "automobile", "bird", "cat", "deer", "dog",
                     "frog", "horse", "ship", "truck"}};
    return m;
  }();
  return kDatasets;
}

// Digests of the files written by tools/fetch_mnist_subset.py.
const std::map<std::string, std::string>& pinned_digests(
    const std::string& name) {
  static const std::map<std::string, std::map<std::string, std::string>>
      kPinned = {
          {"mnist-subset",
           {
               {"train-images-idx3-ubyte", "74422b12132c7d8b0957cdb994d971a505f77a57ddac808ef1ea84f4bb9e7a2e"},
               {"train-labels-idx1-ubyte", "5dbd7686910cb66a8a6303f16940c2fae43896243c187897cd3976aab00f4817"},
               {"t10k-images-idx3-ubyte", "39a5f23fe7320d50d2b650bd96c756db7999a84cb13541d939296ed59f1e0663"},
               {"t10k-labels-idx1-ubyte", "66e4c6deb5f2a061f7d8cd5ec53025fdb9dabb08265e449acb8cf64b8cd36cac"},
           }},
      };
  static const std::map<std::string, std::string> kNone;
  auto it = kPinned.find(name);
  return it == kPinned.end() ? kNone : it->second;
}

std::map<std::string, std::string> read_sha256sums(const fs::path& dir) {
  std::map<std::string, std::string> sums;
  std::ifstream in(dir / "SHA256SUMS");
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string digest, file;
    if (ls >> digest >> file) {
      if (!file.empty() && file[0] == '*') file.erase(0, 1);
      sums[file] = digest;
    }
  }
  return sums;
}

void verify_file(const std::string& dataset, const fs::path& dir,
                 const std::string& file) {
  const fs::path path = dir / file;
  if (!fs::exists(path)) {
    fail(ErrorCode::kIngestion, "dataset '" + dataset + "': missing file " +
                                    path.string());
  }
  std::string expected;
  const auto& pinned = pinned_digests(dataset);
  if (auto it = pinned.find(file); it != pinned.end()) expected = it->second;
  if (expected.empty()) {
    auto sums = read_sha256sums(dir);
    if (auto it = sums.find(file); it != sums.end()) expected = it->second;
  }
  if (expected.empty()) return;
  const auto actual = sha256_file(path.string());
  if (actual != expected) {
    fail(ErrorCode::kIngestion, "checksum mismatch for " + path.string() +
                                    ": expected " + expected + ", actual " +
                                    actual);
  }
}

std::vector<uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIngestion, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

uint32_t be32(const std::vector<uint8_t>& b, std::size_t off) {
  return (uint32_t{b[off]} << 24) | (uint32_t{b[off + 1]} << 16) |
         (uint32_t{b[off + 2]} << 8) | uint32_t{b[off + 3]};
}

std::pair<torch::Tensor, torch::Tensor> read_idx_pair(const fs::path& images,
                                                      const fs::path& labels) {
  auto img = read_bytes(images);
  auto lab = read_bytes(labels);
  if (img.size() < 16 || be32(img, 0) != 0x00000803) {
    fail(ErrorCode::kIngestion, "bad IDX image header in " + images.string());
  }
  if (lab.size() < 8 || be32(lab, 0) != 0x00000801) {
    fail(ErrorCode::kIngestion, "bad IDX label header in " + labels.string());
  }
  const int64_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  if (static_cast<int64_t>(be32(lab, 4)) != n ||
      img.size() != static_cast<std::size_t>(16 + n * rows * cols) ||
      lab.size() != static_cast<std::size_t>(8 + n)) {
    fail(ErrorCode::kIngestion, "IDX size mismatch in " + images.string());
  }
  auto x = torch::from_blob(img.data() + 16, {n, 1, rows, cols}, torch::kUInt8)
               .to(torch::kFloat)
               .div_(255.0);
  auto y = torch::from_blob(lab.data() + 8, {n}, torch::kUInt8)
               .to(torch::kLong);
  return {x, y};
}

std::pair<torch::Tensor, torch::Tensor> read_cifar(
    const std::vector<fs::path>& files) {
  constexpr int64_t kRecord = 1 + 3 * 32 * 32;
  std::vector<torch::Tensor> xs, ys;
  for (const auto& f : files) {
    auto bytes = read_bytes(f);
    if (bytes.size() % kRecord != 0) {
      fail(ErrorCode::kIngestion, "truncated CIFAR batch " + f.string());
    }
    const int64_t n = static_cast<int64_t>(bytes.size()) / kRecord;
    auto raw = torch::from_blob(bytes.data(), {n, kRecord}, torch::kUInt8);
    ys.push_back(raw.select(1, 0).to(torch::kLong));
    xs.push_back(raw.slice(1, 1)
                     .reshape({n, 3, 32, 32})
                     .to(torch::kFloat)
                     .div_(255.0));
  }
  return {torch::cat(xs), torch::cat(ys)};
}

}  // namespace

const DatasetInfo& dataset_info(const std::string& name) {
  const auto& reg = registry();
  auto it = reg.find(name);
  if (it == reg.end()) {
    std::string list;
    for (const auto& n : supported_datasets()) list += (list.empty() ? "" : ", ") + n;
    fail(ErrorCode::kIngestion,
         "unknown dataset '" + name + "' (supported: " + list + ")");
  }
  return it->second;
}

std::vector<std::string> supported_datasets() {
  std::vector<std::string> names;
  for (const auto& [n, info] : registry()) names.push_back(n);
  return names;
}

// ---------------------------------------------------------------------------

void DataAccessAudit::set_training_embargo(bool on) {
  std::lock_guard<std::mutex> lock(mu_);
  embargo_ = on;
}

bool DataAccessAudit::training_embargoed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return embargo_;
}

void DataAccessAudit::record(const std::string& dataset, Split split) {
  std::lock_guard<std::mutex> lock(mu_);
  const bool denied = embargo_ && split == Split::kTrain;
  events_.push_back({dataset, split, denied});
  if (denied) {
    fail(ErrorCode::kDataFreeViolation,
         "data-free violation: training split of '" + dataset +
             "' requested while the training split is embargoed");
  }
}

int64_t DataAccessAudit::training_reads() const {
  std::lock_guard<std::mutex> lock(mu_);
  int64_t n = 0;
  for (const auto& e : events_) n += (e.split == Split::kTrain && !e.denied);
  return n;
}

int64_t DataAccessAudit::denied_reads() const {
  std::lock_guard<std::mutex> lock(mu_);
  int64_t n = 0;
  for (const auto& e : events_) n += e.denied;
  return n;
}

std::vector<DataAccessAudit::Event> DataAccessAudit::events() const {
  std::lock_guard<std::mutex> lock(mu_);
  return events_;
}

// ---------------------------------------------------------------------------

std::string resolve_data_dir(const std::string& data_dir) {
  if (!data_dir.empty()) return data_dir;
  if (const char* env = std::getenv("DFQ_DATA_DIR"); env && *env) return env;
  return "data";
}

torch::Tensor resize_images(const torch::Tensor& pixels, int64_t size) {
  auto x = pixels;
  if (size <= 0 || size == x.size(2)) return x;
  if (x.size(2) == 28 && x.size(3) == 28) {
    x = F::pad(x, F::PadFuncOptions({2, 2, 2, 2}));
    if (size == 32) return x;
  }
  return F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(size));
}

torch::Tensor normalize_images(const torch::Tensor& pixels,
                               const Normalization& n) {
  const int64_t c = pixels.size(1);
  auto mean = torch::tensor(n.mean, pixels.options()).view({1, c, 1, 1});
  auto std = torch::tensor(n.stddev, pixels.options()).view({1, c, 1, 1});
  return (pixels - mean) / std;
}

torch::Tensor denormalize_images(const torch::Tensor& images,
                                 const Normalization& n) {
  const int64_t c = images.size(1);
  auto mean = torch::tensor(n.mean, images.options()).view({1, c, 1, 1});
  auto std = torch::tensor(n.stddev, images.options()).view({1, c, 1, 1});
  return images * std + mean;
}

LabeledImages ingest_dataset(const std::string& name, Split split,
                             const IngestOptions& options,
                             DataAccessAudit* audit) {
  const auto& info = dataset_info(name);
  if (audit) audit->record(name, split);

  const fs::path dir = fs::path(resolve_data_dir(options.data_dir)) / name;
  if (!fs::is_directory(dir)) {
    fail(ErrorCode::kIngestion,
         "dataset '" + name + "' not found under " + dir.string() +
             " (set DFQ_DATA_DIR or run tools/fetch_mnist_subset.py)");
  }

  torch::Tensor x, y;
  if (name == "cifar10") {
    std::vector<std::string> files;
    if (split == Split::kTrain) {
      for (int i = 1; i <= 5; ++i) {
        files.push_back("data_batch_" + std::to_string(i) + ".bin");
      }
    } else {
      files.push_back("test_batch.bin");
    }
    std::vector<fs::path> paths;
    for (const auto& f : files) {
      verify_file(name, dir, f);
      paths.push_back(dir / f);
    }
    std::tie(x, y) = read_cifar(paths);
  } else {
    const std::string prefix = split == Split::kTrain ? "train" : "t10k";
    const auto images = prefix + "-images-idx3-ubyte";
    const auto labels = prefix + "-labels-idx1-ubyte";
    verify_file(name, dir, images);
    verify_file(name, dir, labels);
    std::tie(x, y) = read_idx_pair(dir / images, dir / labels);
  }

  const int64_t expected =
      split == Split::kTrain ? info.train_count : info.test_count;
  if (y.size(0) != expected) {
    fail(ErrorCode::kIngestion,
         "dataset '" + name + "' " + split_name(split) + " split has " +
             std::to_string(y.size(0)) + " items, expected " +
             std::to_string(expected));
  }
  if (y.min().item<int64_t>() < 0 ||
      y.max().item<int64_t>() >= info.num_classes) {
    fail(ErrorCode::kIngestion, "dataset '" + name + "' has labels outside [0, " +
                                    std::to_string(info.num_classes) + ")");
  }

  LabeledImages out;
  out.info = info;
  out.images = normalize_images(resize_images(x, options.image_size),
                                info.normalization);
  out.labels = y;
  return out;
}

at::Generator make_rng(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

}  // namespace dfq

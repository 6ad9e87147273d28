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

#include "dfq/grid.hpp"

#include <cstdio>
#include <filesystem>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dfq/data.hpp"
#include "dfq/error.hpp"

namespace dfq {

namespace {

constexpr int kLabelWidth = 96;
constexpr int kCaptionHeight = 14;

}  // namespace

GridResult export_sample_grid(ConditionalGenerator g, Classifier teacher,
                              const std::vector<int64_t>& classes,
                              int64_t samples_per_class,
                              const std::string& path,
                              const GridOptions& options) {
  const auto& spec = g->spec();
  DFQ_CHECK(!classes.empty() && samples_per_class > 0,
            ErrorCode::kInvalidArgument,
            "grid needs at least one class and one sample per class");
  for (auto c : classes) {
    DFQ_CHECK(c >= 0 && c < spec.num_classes, ErrorCode::kContract,
              "grid class " + std::to_string(c) + " out of range");
  }
  DFQ_CHECK(spec.channels == 1 || spec.channels == 3,
            ErrorCode::kInvalidArgument, "grid supports 1 or 3 channels");
  const int64_t rows = static_cast<int64_t>(classes.size());
  const int64_t cols = samples_per_class;
  const int tile = static_cast<int>(options.tile_size);

  torch::NoGradGuard no_grad;
  auto rng = make_rng(options.seed);
  auto z = torch::randn({rows * cols, spec.noise_dim}, rng);
  auto y = torch::tensor(classes, torch::kLong).repeat_interleave(cols);
  auto images = generator_forward(g, z, y);
  auto probs = torch::softmax(teacher_forward(teacher, images), 1);
  auto [conf, pred] = probs.max(1);
  auto pixels = denormalize_images(images, spec.normalization).clamp(0, 1);
  // (N, H, W, C) bytes, channels reordered to BGR for OpenCV.
  auto bytes = (pixels * 255.0).round().to(torch::kUInt8);
  if (spec.channels == 3) bytes = bytes.flip(1);
  bytes = bytes.permute({0, 2, 3, 1}).contiguous();

  const int cell_h = tile + kCaptionHeight;
  GridResult out;
  out.rows = rows;
  out.cols = cols;
  out.width = kLabelWidth + cols * tile;
  out.height = rows * cell_h;
  cv::Mat canvas(static_cast<int>(out.height), static_cast<int>(out.width),
                 CV_8UC3, cv::Scalar(255, 255, 255));
  const int cv_type = spec.channels == 3 ? CV_8UC3 : CV_8UC1;
  for (int64_t r = 0; r < rows; ++r) {
    const int top = static_cast<int>(r * cell_h);
    const auto name = classes[r] < static_cast<int64_t>(options.class_names.size())
                          ? options.class_names[classes[r]]
                          : std::to_string(classes[r]);
    cv::putText(canvas, name, cv::Point(4, top + cell_h / 2 + 4),
                cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1,
                cv::LINE_AA);
    for (int64_t c = 0; c < cols; ++c) {
      const int64_t i = r * cols + c;
      auto t = bytes[i];
      cv::Mat src(static_cast<int>(spec.height), static_cast<int>(spec.width),
                  cv_type, t.data_ptr<uint8_t>());
      cv::Mat big;
      cv::resize(src, big, cv::Size(tile, tile), 0, 0, cv::INTER_NEAREST);
      if (spec.channels == 1) cv::cvtColor(big, big, cv::COLOR_GRAY2BGR);
      const int left = kLabelWidth + static_cast<int>(c) * tile;
      big.copyTo(canvas(cv::Rect(left, top, tile, tile)));

      TileAnnotation a;
      a.row = r;
      a.col = c;
      a.conditioning_label = classes[r];
      a.predicted_label = pred[i].item<int64_t>();
      a.confidence = conf[i].item<double>();
      char caption[32];
      std::snprintf(caption, sizeof(caption), "%lld %.2f",
                    static_cast<long long>(a.predicted_label), a.confidence);
      const bool match = a.predicted_label == a.conditioning_label;
      cv::putText(canvas, caption, cv::Point(left + 2, top + tile + 11),
                  cv::FONT_HERSHEY_PLAIN, 0.8,
                  match ? cv::Scalar(0, 120, 0) : cv::Scalar(0, 0, 200), 1,
                  cv::LINE_AA);
      out.tiles.push_back(a);
    }
  }
  const auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  bool ok = false;
  try {
    ok = cv::imwrite(path, canvas);
  } catch (const cv::Exception& e) {
    fail(ErrorCode::kIo, "cannot write grid " + path + ": " + e.what());
  }
  DFQ_CHECK(ok, ErrorCode::kIo, "cannot write grid " + path);
  return out;
}

}  // namespace dfq

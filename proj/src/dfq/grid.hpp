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

#ifndef DFQ_GRID_HPP_
#define DFQ_GRID_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dfq/classifier.hpp"
#include "dfq/generator.hpp"

namespace dfq {

struct TileAnnotation {
  int64_t row = 0;
  int64_t col = 0;
  int64_t conditioning_label = 0;
  int64_t predicted_label = 0;
  double confidence = 0;  // teacher softmax at predicted_label
};

struct GridResult {
  int64_t rows = 0;
  int64_t cols = 0;
  int64_t width = 0;   // pixels
  int64_t height = 0;  // pixels
  std::vector<TileAnnotation> tiles;  // row-major
};

struct GridOptions {
  int64_t tile_size = 64;  // tiles are upscaled to this many pixels
  uint64_t seed = 0;
  std::vector<std::string> class_names;  // empty: numeric labels
};

// One row per class, `samples_per_class` columns. Tiles are mapped back to
// pixel space (inverse normalization), clipped to [0, 1] and annotated with
// the teacher's argmax label and confidence. Write failures raise kIo.
GridResult export_sample_grid(ConditionalGenerator g, Classifier teacher,
                              const std::vector<int64_t>& classes,
                              int64_t samples_per_class,
                              const std::string& path,
                              const GridOptions& options = {});

}  // namespace dfq

#endif  // DFQ_GRID_HPP_

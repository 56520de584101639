// Copyright 2026 the pssdet authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/assign.hpp"
#include "core/geometry.hpp"
#include "core/tensor.hpp"

namespace pssdet {

// Colored shapes on a noisy background. Class ids are fixed: 0 disk,
// 1 square, 2 triangle.
inline constexpr int kNumShapeClasses = 3;
inline constexpr double kMinShapeSide = 6.0;

struct DataConfig {
  int height = 64;
  int width = 64;
  int min_objects = 1;
  int max_objects = 3;
  double overlap_cap = 0.2;  // max allowed IoU between ground-truth boxes
  double noise = 0.08;       // background texture amplitude
};

void validate_config(const DataConfig& cfg);

struct Scene {
  Tensor image;  // (3, H, W), values in [0, 1]
  std::vector<GtInstance> objects;
  int skipped = 0;  // placements given up after bounded retries
};

// Fully determined by (seed, image_id); images in one dataset are independent
// streams, so regenerating a single scene matches the full run.
Scene make_scene(uint64_t seed, int image_id, const DataConfig& cfg);

Scene hflip(const Scene& scene);

struct ImageRecord {
  int id = 0;
  std::string file;
  int width = 0;
  int height = 0;
  std::vector<GtInstance> objects;
};

struct DatasetIndex {
  std::vector<ImageRecord> records;
};

// Writes img_NNNNN.ppm files plus annotations.json into out_dir and returns
// the index. Logs a line to stderr for every skipped placement.
DatasetIndex generate_dataset(uint64_t seed, int count, const DataConfig& cfg, const std::string& out_dir);

void save_annotations(const std::string& path, const DatasetIndex& index);
// Validates as it reads; errors name the failing record index.
DatasetIndex load_annotations(const std::string& path);

// 8-bit quantization used by the PPM writer, exposed so callers can compare
// in-memory scenes against files byte for byte.
std::vector<uint8_t> to_rgb8(const Tensor& image);

void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

}  // namespace pssdet

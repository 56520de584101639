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

#include "core/data_synth.hpp"
#include "core/inference.hpp"
#include "core/model.hpp"
#include "core/trainer.hpp"

namespace pssdet {

// Every knob one run needs, in a single document. The resolved form written
// next to each run's outputs materializes all defaults, so the run is
// reconstructible from that file and nothing else.
struct RunConfig {
  uint64_t seed = 0;
  DetectorConfig detector;
  TrainConfig train;  // its seed field mirrors the top-level seed
  DataConfig data;
  int train_count = 500;
  int val_count = 100;
  InferenceConfig infer;
  double nms_iou = 0.6;
  // When set, training loads these directories instead of synthesizing the
  // scenes in memory from the run seed. Both routes produce the same pixels.
  std::string train_data_dir;
  std::string val_data_dir;
};

// Rejects unknown keys with the full key path. Missing keys keep defaults.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);
// File wrapper; read and parse errors name the path.
RunConfig load_run_config(const std::string& path);

void validate_run_config(const RunConfig& cfg);

}  // namespace pssdet

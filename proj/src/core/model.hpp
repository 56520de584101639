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
#include <string_view>
#include <vector>

#include "core/anchors.hpp"
#include "core/assign.hpp"
#include "core/losses.hpp"
#include "core/optim.hpp"
#include "core/tape.hpp"

namespace pssdet {

enum class PssBranch { kRegression, kClassification };

struct DetectorConfig {
  int num_classes = 3;
  std::vector<int> strides = {4, 8, 16};
  int tower_depth = 2;
  int tower_channels = 32;
  int pss_depth = 2;
  int pss_channels = 16;
  PssBranch pss_branch = PssBranch::kRegression;
  bool use_centerness = true;
  bool use_stop_grad = true;
  bool use_pss = true;
};

// Throws invalid_argument naming the offending field.
void validate_config(const DetectorConfig& cfg);
std::string config_to_json(const DetectorConfig& cfg);
// Rejects unknown keys; missing keys keep their defaults.
DetectorConfig config_from_json(const std::string& text);

// Flat per-anchor views of every head, rows in anchor layout order.
struct FlatOutputs {
  Var cls;       // (A, C) logits
  Var ctr;       // (A) logits; pinned so sigmoid is exactly 1 when centerness is off
  Var pss;       // (A) logits; invalid when the selector head is disabled
  LtrbVars reg;  // (A) each, stride units, strictly positive
  std::vector<Var> param_vars;  // tape leaves aligned with ParamSet order
  AnchorLayout layout;
};

// A small three-level detector: four stride-2 conv blocks, lateral 1x1 convs
// with 2x upsampling for the pyramid, shared conv towers, and dense heads for
// class logits, box offsets, centerness, and the one-to-one selector. The
// selector tower hangs off the regression tower (or the classification tower)
// and sees it through a gradient stop when use_stop_grad is set.
class Detector {
 public:
  Detector(DetectorConfig cfg, uint64_t seed);

  const DetectorConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  int64_t param_count() const;
  std::string describe() const;

  // image is (3, H, W) with H, W divisible by the largest stride.
  FlatOutputs forward(Tape& tape, const Tensor& image) const;
  // Detached probabilities and decoded pixel boxes for label assignment.
  OutputSnapshot snapshot(const Tape& tape, const FlatOutputs& out) const;

  static bool is_pss_param(std::string_view name);
  // Update mask selecting either the selector head or everything else.
  std::vector<uint8_t> pss_mask(bool train_pss) const;

  void save(const std::string& path) const;
  static Detector load(const std::string& path);

 private:
  // weight_bound 0 means fan-in scaled; positive values pin the uniform range.
  void add_conv(const std::string& name, int out_ch, int in_ch, int k, uint64_t seed, double bias_init,
                double weight_bound = 0.0);

  DetectorConfig cfg_;
  ParamSet params_;
};

}  // namespace pssdet

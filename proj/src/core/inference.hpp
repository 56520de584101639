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

#include <string>
#include <vector>

#include "core/anchors.hpp"
#include "core/assign.hpp"
#include "core/geometry.hpp"

namespace pssdet {

enum class DetectionSource { kEndToEnd, kOneToMany };

struct Detection {
  int cls = 0;
  Box box;  // clipped to the image
  double score = 0;
  DetectionSource source = DetectionSource::kEndToEnd;
};

struct InferenceConfig {
  double score_floor = 0.01;  // applied before top_k to bound memory
  int top_k = 100;
};

// Selector path: score = pss * cls * ctr per anchor and class, global top_k,
// no suppression of any kind. Ties order by (anchor, class).
std::vector<Detection> decode_end_to_end(const OutputSnapshot& snap, int img_w, int img_h,
                                         const InferenceConfig& cfg);

// Dense path: score = cls * ctr, optional greedy per-class NMS, then top_k.
// apply_nms=false exposes the raw duplicate-heavy ranking.
std::vector<Detection> decode_one_to_many(const OutputSnapshot& snap, int img_w, int img_h,
                                          const InferenceConfig& cfg, bool apply_nms, double nms_iou = 0.6);

// Greedy descending-score suppression within each class at IoU strictly
// above the threshold. Output keeps descending score order; idempotent.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

enum class HeatKind { kCls, kPss, kProduct };

// Max-over-class score map for one pyramid level, min-max scaled to 0..255
// and written as a P5 PGM. A constant map writes mid gray.
void export_heatmap(const OutputSnapshot& snap, const AnchorLayout& layout, int level, HeatKind kind,
                    const std::string& path);

}  // namespace pssdet

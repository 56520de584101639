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

#include "core/assign.hpp"
#include "core/inference.hpp"

namespace pssdet {

// The ten COCO-style thresholds 0.50, 0.55, ..., 0.95.
const std::vector<double>& iou_thresholds();

struct EvalReport {
  std::vector<double> ap_per_iou;    // one entry per threshold
  std::vector<double> per_class_ap;  // averaged over thresholds, -1 without ground truth
  double mean_ap = 0;
  double ap50 = 0;
  double mean_ar100 = 0;
  double duplicate_rate = 0;
  double forward_ms = 0;  // filled by the caller's timer
  double post_ms = 0;
};

// COCO-style protocol: per class and threshold, detections in descending
// score order greedily claim the unmatched ground-truth box of highest IoU at
// or above the threshold; AP is the 101-point interpolated area and AR@100
// the mean recall with at most max_dets detections per image.
EvalReport evaluate(const std::vector<std::vector<Detection>>& dets_per_image,
                    const std::vector<std::vector<GtInstance>>& gts_per_image, int num_classes, int max_dets = 100);

// Fraction of ground-truth instances claimed by two or more same-class
// detections with score >= score_thr and IoU >= iou_thr.
double duplicate_rate(const std::vector<std::vector<Detection>>& dets_per_image,
                      const std::vector<std::vector<GtInstance>>& gts_per_image, double score_thr = 0.5,
                      double iou_thr = 0.5);

// Timings live under a separate "timing" key; report_signature omits them so
// reports from identical runs compare byte for byte.
std::string report_to_json(const EvalReport& report);
std::string report_signature(const EvalReport& report);

void write_detections_jsonl(const std::string& path, const std::vector<std::vector<Detection>>& dets_per_image);

}  // namespace pssdet

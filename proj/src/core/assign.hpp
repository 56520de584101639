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
#include <limits>
#include <vector>

#include "core/anchors.hpp"
#include "core/geometry.hpp"

namespace pssdet {

struct GtInstance {
  Box box;
  int cls = 0;
};

struct AssignConfig {
  // Center sampling half-side, in units of the level stride.
  double center_radius = 1.5;
  // Per-level upper bound on max(l,t,r,b) in pixels; an anchor is in range
  // when prev_bound < m <= bound. Size must match the number of levels.
  std::vector<double> range_max = {16.0, 32.0, std::numeric_limits<double>::infinity()};
  int atss_top_k = 9;
  // Square probe anchor side = this factor times the stride (8 scaled by 0.75).
  double atss_anchor_side_factor = 6.0;
};

// Default assignment for a pyramid: each level owns regression extents up to
// four strides, the coarsest level takes everything beyond. Matches the
// built-in range_max when strides are {4, 8, 16}.
AssignConfig assign_config_for_strides(const std::vector<int>& strides);

// Dense per-anchor labels in the flat anchor order. Stride-normalized box
// targets and centerness are meaningful only where owner >= 0.
struct OneToManyLabels {
  std::vector<int> cls;     // -1 background
  std::vector<int> owner;   // -1 or instance index, at most one per anchor
  std::vector<LtrbTarget> ltrb;
  std::vector<double> ctr;
  std::vector<int> unmatched;  // instances that ended up with no positive anchor
  int num_pos = 0;
};

// Eligible anchors per instance for the one-to-one step. Built from the
// one-to-many positives, so the sets are disjoint across instances.
struct CandidateSet {
  std::vector<std::vector<int>> omega;
};

// Detached per-anchor view of the detector outputs (probabilities after the
// sigmoid, boxes already decoded). Label assignment never backpropagates.
struct OutputSnapshot {
  int num_classes = 0;
  std::vector<double> cls_prob;  // anchors x classes, row major
  std::vector<double> ctr_prob;
  std::vector<double> pss_prob;
  std::vector<Box> boxes;

  double cls_at(int anchor, int c) const { return cls_prob[static_cast<size_t>(anchor) * num_classes + c]; }
};

struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}
  double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

enum class QualityMode { kMul, kAdd };
enum class Matcher { kHungarian, kTopOne };

// Instance index -> anchor flat index, -1 for instances left unmatched
// (empty candidate set). Injective over the matched entries.
struct OneToOneAssignment {
  std::vector<int> anchor_of;
  std::vector<double> quality_of;
};

OneToManyLabels fcos_assign(const AnchorLayout& layout, const std::vector<GtInstance>& instances,
                            const AssignConfig& cfg);
OneToManyLabels atss_assign(const AnchorLayout& layout, const std::vector<GtInstance>& instances,
                            const AssignConfig& cfg);

CandidateSet candidates_from(const OneToManyLabels& labels, int num_instances);

// Q[i, j] = 1[i in omega_j] * f(P_i(c_j), IoU(box_i, b_j)) with
// P = pss * cls * ctr, f multiplicative P^(1-alpha) * IoU^alpha or additive
// (1-alpha) * P + alpha * IoU.
Mat quality_matrix(const OutputSnapshot& outputs, const std::vector<GtInstance>& instances,
                   const CandidateSet& candidates, double alpha, QualityMode mode);

// Maximum-total injective assignment of columns (instances) to rows
// (anchors); requires rows >= cols. Equal-quality anchors within a column
// resolve to the lowest row index.
OneToOneAssignment hungarian_match(const Mat& q);

// Greedy: instances in descending order of their best entry, each taking the
// best still-unclaimed row. Never beats hungarian_match on total quality.
OneToOneAssignment top_one_match(const Mat& q);

// Restricts Q to the union of candidate rows, runs the chosen matcher, and
// maps row indices back to anchor ids. Instances with empty candidate sets
// come back as -1.
OneToOneAssignment one_to_one_assign(const OutputSnapshot& outputs, const std::vector<GtInstance>& instances,
                                     const CandidateSet& candidates, double alpha, QualityMode mode, Matcher matcher);

}  // namespace pssdet

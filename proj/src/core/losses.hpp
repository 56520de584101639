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

#include <vector>

#include "core/assign.hpp"
#include "core/geometry.hpp"
#include "core/tape.hpp"

namespace pssdet {

struct FocalConfig {
  double gamma = 2.0;
  double alpha_bal = 0.25;
};

// All terms are scalar variables on the same tape; total is their weighted
// sum l_cls + l_reg + l_ctr + lambda1 * l_pss + lambda2 * l_rank.
struct LossBreakdown {
  Var l_cls, l_reg, l_ctr, l_pss, l_rank, total;
  double lambda1 = 1.0;
  double lambda2 = 0.25;
};

// Four parallel rank-1 vectors of side distances, one entry per positive
// anchor, in stride units.
struct LtrbVars {
  Var l, t, r, b;
};

// Sum over entries of -alpha_t * (1 - p_t)^gamma * log(p_t), / normalizer.
// p holds probabilities, targets marks the positive entries with 1.
Var focal_loss(Tape& tape, Var p, const Tensor& targets, double gamma, double alpha_bal, double normalizer);

// Centerness-weighted mean of (1 - giou(pred, target)) over positive anchors;
// both boxes hang off the same anchor point, so the giou works directly on
// side distances. Zero positives give a constant 0.
Var giou_loss(Tape& tape, const LtrbVars& pred, const std::vector<LtrbTarget>& target,
              const std::vector<double>& weights);

// Mean binary cross-entropy of sigmoid(logits) against soft targets.
Var centerness_loss(Tape& tape, Var ctr_logits, const std::vector<double>& targets);

// C-way focal loss on the product score sigmoid(pss) * sigmoid(cls) *
// sigmoid(ctr) over every anchor-class pair; the one-to-one assignment
// defines the single positive pair per instance, everything else is
// negative. detach_partners freezes the cls and ctr factors so this term
// moves only the selector head.
Var pss_loss(Tape& tape, Var pss_logits, Var cls_logits, Var ctr_logits, const OneToOneAssignment& assignment,
             const std::vector<GtInstance>& instances, bool detach_partners, const FocalConfig& focal,
             double normalizer);

// Hinge on the product score: for each instance, mean over the num_neg
// best-scoring negative pairs of max(0, margin - s_pos + s_neg). Not part of
// the published objective; kept as an optional extra, weighted by lambda2.
Var ranking_loss(Tape& tape, Var pss_logits, Var cls_logits, Var ctr_logits, const OneToOneAssignment& assignment,
                 const std::vector<GtInstance>& instances, bool detach_partners, double margin, int num_neg);

LossBreakdown combine_losses(Tape& tape, Var l_cls, Var l_reg, Var l_ctr, Var l_pss, Var l_rank, double lambda1,
                             double lambda2);

}  // namespace pssdet

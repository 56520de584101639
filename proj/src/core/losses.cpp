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

#include "core/losses.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

namespace pssdet {

namespace {

constexpr double kProbFloor = 1e-12;

std::vector<int64_t> assigned_pairs(const OneToOneAssignment& assignment, const std::vector<GtInstance>& instances,
                                    int num_classes) {
  if (assignment.anchor_of.size() != instances.size()) {
    throw std::invalid_argument("pss targets: assignment covers " + std::to_string(assignment.anchor_of.size()) +
                                " instances, scene has " + std::to_string(instances.size()));
  }
  std::set<int> seen;
  std::vector<int64_t> pairs;
  for (size_t j = 0; j < instances.size(); ++j) {
    const int a = assignment.anchor_of[j];
    if (a < 0) continue;
    if (!seen.insert(a).second) {
      throw std::invalid_argument("pss targets: anchor " + std::to_string(a) + " assigned to two instances");
    }
    const int c = instances[j].cls;
    if (c < 0 || c >= num_classes) throw std::invalid_argument("pss targets: class " + std::to_string(c) + " out of range");
    pairs.push_back(static_cast<int64_t>(a) * num_classes + c);
  }
  return pairs;
}

// sigmoid(pss) * sigmoid(cls) * sigmoid(ctr) as an anchors-by-classes map.
Var product_score(Tape& tape, Var pss_logits, Var cls_logits, Var ctr_logits, bool detach_partners) {
  const std::vector<int>& cs = cls_logits.shape();
  if (cs.size() != 2) throw std::invalid_argument("product score: cls logits must be anchors x classes");
  const int a = cs[0];
  if (pss_logits.value().size() != a || ctr_logits.value().size() != a) {
    throw std::invalid_argument("product score: pss/ctr logits do not match anchor count " + std::to_string(a));
  }
  Var sc = tape.sigmoid(cls_logits);
  Var sctr = tape.reshape(tape.sigmoid(ctr_logits), {a, 1});
  if (detach_partners) {
    sc = tape.stop_gradient(sc);
    sctr = tape.stop_gradient(sctr);
  }
  Var sp = tape.reshape(tape.sigmoid(pss_logits), {a, 1});
  return tape.mul(tape.mul(sc, sp), sctr);
}

}  // namespace

Var focal_loss(Tape& tape, Var p, const Tensor& targets, double gamma, double alpha_bal, double normalizer) {
  const Tensor& pv = p.value();
  if (!pv.all_finite()) throw std::invalid_argument("focal_loss: non-finite probabilities");
  if (!pv.same_shape(targets)) {
    throw std::invalid_argument("focal_loss: probability shape " + shape_to_string(pv.shape()) +
                                " vs target shape " + shape_to_string(targets.shape()));
  }
  if (normalizer <= 0) throw std::invalid_argument("focal_loss: normalizer must be positive");

  Tensor inv(targets.shape());
  Tensor alpha_t(targets.shape());
  for (int64_t i = 0; i < targets.size(); ++i) {
    inv[i] = 1.0 - targets[i];
    alpha_t[i] = targets[i] > 0 ? alpha_bal : 1.0 - alpha_bal;
  }
  Var t = tape.leaf(targets);
  Var ti = tape.leaf(std::move(inv));
  Var w = tape.leaf(std::move(alpha_t));

  Var pt = tape.add(tape.mul(t, p), tape.mul(ti, tape.add_scalar(tape.neg(p), 1.0)));
  Var ptc = tape.max(pt, tape.leaf(Tensor::full(targets.shape(), kProbFloor)));
  Var focus = tape.pow_const(tape.add_scalar(tape.neg(ptc), 1.0), gamma);
  Var per_entry = tape.mul(w, tape.mul(focus, tape.neg(tape.log(ptc))));
  return tape.mul_scalar(tape.sum(per_entry), 1.0 / normalizer);
}

Var giou_loss(Tape& tape, const LtrbVars& pred, const std::vector<LtrbTarget>& target,
              const std::vector<double>& weights) {
  const int n = static_cast<int>(target.size());
  if (weights.size() != target.size()) throw std::invalid_argument("giou_loss: weight count does not match targets");
  if (n == 0) return tape.leaf(Tensor::scalar(0.0));
  for (Var v : {pred.l, pred.t, pred.r, pred.b}) {
    if (v.value().size() != n) throw std::invalid_argument("giou_loss: prediction length does not match targets");
  }

  Tensor tl({n}), tt({n}), tr({n}), tb({n}), area_t({n}), wt({n});
  double weight_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const LtrbTarget& d = target[static_cast<size_t>(i)];
    tl[i] = d.l;
    tt[i] = d.t;
    tr[i] = d.r;
    tb[i] = d.b;
    area_t[i] = (d.l + d.r) * (d.t + d.b);
    wt[i] = weights[static_cast<size_t>(i)];
    weight_sum += weights[static_cast<size_t>(i)];
  }
  if (weight_sum <= 0) throw std::invalid_argument("giou_loss: weights must sum to a positive value");
  Var l = tape.leaf(std::move(tl)), t = tape.leaf(std::move(tt));
  Var r = tape.leaf(std::move(tr)), b = tape.leaf(std::move(tb));

  Var inter = tape.mul(tape.add(tape.min(pred.l, l), tape.min(pred.r, r)),
                       tape.add(tape.min(pred.t, t), tape.min(pred.b, b)));
  Var area_p = tape.mul(tape.add(pred.l, pred.r), tape.add(pred.t, pred.b));
  Var uni = tape.sub(tape.add(area_p, tape.leaf(std::move(area_t))), inter);
  Var hull = tape.mul(tape.add(tape.max(pred.l, l), tape.max(pred.r, r)),
                      tape.add(tape.max(pred.t, t), tape.max(pred.b, b)));
  Var g = tape.sub(tape.div(inter, uni), tape.div(tape.sub(hull, uni), hull));
  Var weighted = tape.mul(tape.leaf(std::move(wt)), tape.add_scalar(tape.neg(g), 1.0));
  return tape.mul_scalar(tape.sum(weighted), 1.0 / weight_sum);
}

Var centerness_loss(Tape& tape, Var ctr_logits, const std::vector<double>& targets) {
  const int n = static_cast<int>(targets.size());
  if (n == 0) return tape.leaf(Tensor::scalar(0.0));
  if (ctr_logits.value().size() != n) throw std::invalid_argument("centerness_loss: logit count does not match targets");

  Tensor y({n}), yi({n});
  for (int i = 0; i < n; ++i) {
    y[i] = targets[static_cast<size_t>(i)];
    yi[i] = 1.0 - targets[static_cast<size_t>(i)];
  }
  Var s = tape.sigmoid(ctr_logits);
  Var floor_leaf = tape.leaf(Tensor::full({n}, kProbFloor));
  Var log_s = tape.log(tape.max(s, floor_leaf));
  Var log_is = tape.log(tape.max(tape.add_scalar(tape.neg(s), 1.0), floor_leaf));
  Var bce = tape.neg(tape.add(tape.mul(tape.leaf(std::move(y)), log_s), tape.mul(tape.leaf(std::move(yi)), log_is)));
  return tape.mul_scalar(tape.sum(bce), 1.0 / n);
}

Var pss_loss(Tape& tape, Var pss_logits, Var cls_logits, Var ctr_logits, const OneToOneAssignment& assignment,
             const std::vector<GtInstance>& instances, bool detach_partners, const FocalConfig& focal,
             double normalizer) {
  const int num_classes = cls_logits.shape()[1];
  const std::vector<int64_t> pairs = assigned_pairs(assignment, instances, num_classes);
  Var p = product_score(tape, pss_logits, cls_logits, ctr_logits, detach_partners);
  Tensor targets(p.shape());
  for (int64_t idx : pairs) targets[idx] = 1.0;
  return focal_loss(tape, p, targets, focal.gamma, focal.alpha_bal, normalizer);
}

Var ranking_loss(Tape& tape, Var pss_logits, Var cls_logits, Var ctr_logits, const OneToOneAssignment& assignment,
                 const std::vector<GtInstance>& instances, bool detach_partners, double margin, int num_neg) {
  if (margin <= 0) throw std::invalid_argument("ranking_loss: margin must be positive");
  if (num_neg < 1) throw std::invalid_argument("ranking_loss: num_neg must be >= 1");
  const int num_classes = cls_logits.shape()[1];
  const std::vector<int64_t> pairs = assigned_pairs(assignment, instances, num_classes);
  if (pairs.empty()) return tape.leaf(Tensor::scalar(0.0));

  Var p = product_score(tape, pss_logits, cls_logits, ctr_logits, detach_partners);
  const Tensor& pv = p.value();
  const std::set<int64_t> positive(pairs.begin(), pairs.end());

  // pick the hardest negatives by value; the choice itself carries no gradient
  std::vector<int64_t> negs;
  negs.reserve(static_cast<size_t>(pv.size()));
  for (int64_t i = 0; i < pv.size(); ++i) {
    if (positive.count(i) == 0) negs.push_back(i);
  }
  const size_t k = std::min<size_t>(static_cast<size_t>(num_neg), negs.size());
  if (k == 0) return tape.leaf(Tensor::scalar(0.0));
  std::partial_sort(negs.begin(), negs.begin() + static_cast<std::ptrdiff_t>(k), negs.end(),
                    [&](int64_t a, int64_t b) { return pv[a] != pv[b] ? pv[a] > pv[b] : a < b; });
  negs.resize(k);

  Var neg_scores = tape.gather(p, negs);
  Var loss = tape.leaf(Tensor::scalar(0.0));
  for (int64_t pair : pairs) {
    Var pos = tape.gather(p, {pair});
    Var hinge = tape.relu(tape.add_scalar(tape.sub(neg_scores, pos), margin));
    loss = tape.add(loss, tape.mul_scalar(tape.sum(hinge), 1.0 / static_cast<double>(k)));
  }
  return loss;
}

LossBreakdown combine_losses(Tape& tape, Var l_cls, Var l_reg, Var l_ctr, Var l_pss, Var l_rank, double lambda1,
                             double lambda2) {
  LossBreakdown bd;
  bd.l_cls = l_cls;
  bd.l_reg = l_reg;
  bd.l_ctr = l_ctr;
  bd.l_pss = l_pss;
  bd.l_rank = l_rank;
  bd.lambda1 = lambda1;
  bd.lambda2 = lambda2;
  bd.total = tape.add(tape.add(tape.add(l_cls, l_reg), l_ctr),
                      tape.add(tape.mul_scalar(l_pss, lambda1), tape.mul_scalar(l_rank, lambda2)));
  return bd;
}

}  // namespace pssdet

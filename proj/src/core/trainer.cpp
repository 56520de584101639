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

#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "core/losses.hpp"
#include "core/optim.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"

namespace pssdet {

namespace {

void check_positive(int v, const char* field) {
  if (v < 1) throw std::invalid_argument(std::string("train config: ") + field + " must be at least 1");
}

// Mean of the per-image scalar terms, so the reported numbers match the
// gradient that actually drove the update.
struct TermSums {
  double v[6] = {0, 0, 0, 0, 0, 0};

  void add(const LossBreakdown& bd, const Tape& tape) {
    const Var terms[6] = {bd.l_cls, bd.l_reg, bd.l_ctr, bd.l_pss, bd.l_rank, bd.total};
    for (int i = 0; i < 6; ++i) v[i] += tape.value(terms[i])[0];
  }
};

const char* kTermNames[6] = {"l_cls", "l_reg", "l_ctr", "l_pss", "l_rank", "total"};

void check_finite(const LossBreakdown& bd, const Tape& tape, int image_index) {
  const Var terms[6] = {bd.l_cls, bd.l_reg, bd.l_ctr, bd.l_pss, bd.l_rank, bd.total};
  double values[6];
  int bad = -1;
  for (int i = 0; i < 6; ++i) {
    values[i] = tape.value(terms[i])[0];
    if (bad < 0 && !std::isfinite(values[i])) bad = i;
  }
  if (bad < 0) return;
  std::ostringstream msg;
  msg << "train_step: non-finite loss term " << kTermNames[bad] << " on batch image " << image_index << " (";
  for (int i = 0; i < 6; ++i) msg << (i ? ", " : "") << kTermNames[i] << "=" << values[i];
  msg << ")";
  throw std::runtime_error(msg.str());
}

std::vector<int> rescale_decays(const TrainConfig& cfg, int phase_len) {
  std::vector<int> out;
  for (int d : cfg.lr_decay_epochs) {
    const int scaled = static_cast<int>(std::lround(static_cast<double>(d) * phase_len / cfg.epochs));
    if (scaled >= 1 && scaled < phase_len) out.push_back(scaled);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double lr_at(const TrainConfig& cfg, const std::vector<int>& decays, int local_epoch) {
  double lr = cfg.lr;
  for (int d : decays) {
    if (local_epoch >= d) lr *= cfg.lr_decay_factor;
  }
  return lr;
}

// Warmup counts steps within the phase: a two-step run ramps again when the
// selector phase starts from freshly initialized head parameters.
double warmup_scale(const TrainConfig& cfg, int phase_step) {
  if (cfg.warmup_steps <= 0 || phase_step >= cfg.warmup_steps) return 1.0;
  return static_cast<double>(phase_step + 1) / cfg.warmup_steps;
}

void log_row(std::ostream* log, int epoch, int step, double lr, const LossValues& lv) {
  if (!log) return;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", epoch, step, lr, lv.l_cls,
                lv.l_reg, lv.l_ctr, lv.l_pss, lv.l_rank, lv.total);
  *log << buf << "\n";
}

void run_phase(Detector& model, const std::vector<Scene>& dataset, const TrainConfig& cfg, StepScope scope,
               int phase_len, int epoch_base, std::ostream* log, const EpochHook& hook, int* step_counter) {
  const std::vector<int> decays = rescale_decays(cfg, phase_len);
  const int n = static_cast<int>(dataset.size());
  int phase_step = 0;

  for (int e = 0; e < phase_len; ++e) {
    const int epoch = epoch_base + e;
    const double epoch_lr = lr_at(cfg, decays, e);

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = derived_rng(cfg.seed, "train.order", static_cast<uint64_t>(epoch));
    for (int i = n - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(shuffle_rng.next_int(i + 1))]);
    Rng flip_rng = derived_rng(cfg.seed, "train.flip", static_cast<uint64_t>(epoch));

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int end = std::min(n, start + cfg.batch_size);
      std::vector<Scene> flipped;
      flipped.reserve(static_cast<size_t>(end - start));
      std::vector<const Scene*> batch;
      for (int i = start; i < end; ++i) {
        const Scene& scene = dataset[static_cast<size_t>(order[static_cast<size_t>(i)])];
        if (cfg.use_hflip && flip_rng.next_bool()) {
          flipped.push_back(hflip(scene));
          batch.push_back(&flipped.back());
        } else {
          batch.push_back(&scene);
        }
      }
      const double lr = epoch_lr * warmup_scale(cfg, phase_step);
      const LossValues lv = train_step(model, batch, cfg, lr, scope);
      log_row(log, epoch, *step_counter, lr, lv);
      ++*step_counter;
      ++phase_step;
    }

    const bool last_epoch = e == phase_len - 1;
    if (hook && ((cfg.snapshot_every > 0 && (epoch + 1) % cfg.snapshot_every == 0) || last_epoch)) hook(epoch, model);
  }
}

}  // namespace

void validate_config(const TrainConfig& cfg, const DetectorConfig& model_cfg) {
  check_positive(cfg.epochs, "epochs");
  check_positive(cfg.batch_size, "batch_size");
  if (cfg.lr <= 0) throw std::invalid_argument("train config: lr must be positive");
  if (cfg.lr_decay_factor <= 0 || cfg.lr_decay_factor > 1) {
    throw std::invalid_argument("train config: lr_decay_factor must be in (0, 1]");
  }
  for (int d : cfg.lr_decay_epochs) {
    if (d < 1 || d >= cfg.epochs) throw std::invalid_argument("train config: lr_decay_epochs must fall inside the run");
  }
  if (cfg.warmup_steps < 0) throw std::invalid_argument("train config: warmup_steps must be non-negative");
  if (cfg.momentum < 0 || cfg.momentum >= 1) throw std::invalid_argument("train config: momentum must be in [0, 1)");
  if (cfg.weight_decay < 0) throw std::invalid_argument("train config: weight_decay must be non-negative");
  if (cfg.lambda1 < 0) throw std::invalid_argument("train config: lambda1 must be non-negative");
  if (cfg.lambda2 < 0) throw std::invalid_argument("train config: lambda2 must be non-negative");
  if (cfg.alpha < 0 || cfg.alpha > 1) throw std::invalid_argument("train config: alpha must be in [0, 1]");
  if (cfg.lambda2 > 0) {
    if (cfg.rank_margin <= 0) throw std::invalid_argument("train config: rank_margin must be positive");
    check_positive(cfg.rank_negatives, "rank_negatives");
  }
  if ((cfg.lambda1 > 0 || cfg.lambda2 > 0) && !model_cfg.use_pss) {
    throw std::invalid_argument("train config: selector losses need a model built with the selector head");
  }
  if (cfg.mode == TrainMode::kTwoStep) {
    check_positive(cfg.phase1_epochs, "phase1_epochs");
    check_positive(cfg.phase2_epochs, "phase2_epochs");
    if (cfg.lambda1 <= 0) throw std::invalid_argument("train config: two-step mode needs lambda1 > 0 for phase 2");
  }
  if (cfg.snapshot_every < 0) throw std::invalid_argument("train config: snapshot_every must be non-negative");
}

LossValues train_step(Detector& model, const std::vector<const Scene*>& batch, const TrainConfig& cfg, double lr,
                      StepScope scope) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const DetectorConfig& mc = model.config();
  const bool want_pss = scope != StepScope::kDetectorOnly && mc.use_pss && cfg.lambda1 > 0;
  const bool want_rank = scope != StepScope::kDetectorOnly && mc.use_pss && cfg.lambda2 > 0;
  const bool want_det = scope != StepScope::kSelectorOnly;
  const double lambda1 = want_pss ? cfg.lambda1 : 0.0;
  const double lambda2 = want_rank ? cfg.lambda2 : 0.0;

  std::vector<Tensor> grads;
  grads.reserve(static_cast<size_t>(model.params().size()));
  for (const Param& p : model.params()) grads.emplace_back(p.value.shape());

  const AssignConfig assign_cfg = assign_config_for_strides(mc.strides);
  TermSums sums;

  for (size_t bi = 0; bi < batch.size(); ++bi) {
    const Scene& scene = *batch[bi];
    Tape tape;
    FlatOutputs out = model.forward(tape, scene.image);
    const std::vector<GtInstance>& gt = scene.objects;
    const int num_anchors = out.layout.total();

    OneToManyLabels labels = cfg.assigner == AssignerKind::kFcos ? fcos_assign(out.layout, gt, assign_cfg)
                                                                 : atss_assign(out.layout, gt, assign_cfg);
    std::vector<int64_t> pos;
    for (int a = 0; a < num_anchors; ++a) {
      if (labels.owner[static_cast<size_t>(a)] >= 0) pos.push_back(a);
    }

    Var l_cls = tape.leaf(Tensor::scalar(0.0));
    Var l_reg = l_cls, l_ctr = l_cls, l_pss = l_cls, l_rank = l_cls;

    const FocalConfig focal;
    if (want_det) {
      Tensor cls_targets({num_anchors, mc.num_classes});
      for (int64_t a : pos) cls_targets[a * mc.num_classes + labels.cls[static_cast<size_t>(a)]] = 1.0;
      const double norm = std::max(1, labels.num_pos);
      l_cls = focal_loss(tape, tape.sigmoid(out.cls), cls_targets, focal.gamma, focal.alpha_bal, norm);

      if (!pos.empty()) {
        LtrbVars pred{tape.gather(out.reg.l, pos), tape.gather(out.reg.t, pos), tape.gather(out.reg.r, pos),
                      tape.gather(out.reg.b, pos)};
        std::vector<LtrbTarget> targets;
        std::vector<double> ctr_targets;
        for (int64_t a : pos) {
          targets.push_back(labels.ltrb[static_cast<size_t>(a)]);
          ctr_targets.push_back(labels.ctr[static_cast<size_t>(a)]);
        }
        const std::vector<double> weights =
            mc.use_centerness ? ctr_targets : std::vector<double>(pos.size(), 1.0);
        l_reg = giou_loss(tape, pred, targets, weights);
        if (mc.use_centerness) l_ctr = centerness_loss(tape, tape.gather(out.ctr, pos), ctr_targets);
      }
    }

    if (want_pss || want_rank) {
      const OutputSnapshot snap = model.snapshot(tape, out);
      const CandidateSet cands = candidates_from(labels, static_cast<int>(gt.size()));
      const OneToOneAssignment assignment =
          one_to_one_assign(snap, gt, cands, cfg.alpha, cfg.quality, cfg.matcher);
      int matched = 0;
      for (int a : assignment.anchor_of) matched += a >= 0 ? 1 : 0;
      if (want_pss) {
        l_pss = pss_loss(tape, out.pss, out.cls, out.ctr, assignment, gt, cfg.detach_partners, focal,
                         std::max(1, matched));
      }
      if (want_rank) {
        l_rank = ranking_loss(tape, out.pss, out.cls, out.ctr, assignment, gt, cfg.detach_partners, cfg.rank_margin,
                              cfg.rank_negatives);
      }
    }

    const LossBreakdown bd = combine_losses(tape, l_cls, l_reg, l_ctr, l_pss, l_rank, lambda1, lambda2);
    check_finite(bd, tape, static_cast<int>(bi));
    sums.add(bd, tape);

    tape.backward(bd.total);
    for (int p = 0; p < model.params().size(); ++p) {
      const Tensor& g = tape.grad(out.param_vars[static_cast<size_t>(p)]);
      Tensor& acc = grads[static_cast<size_t>(p)];
      for (int64_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  for (Tensor& g : grads) {
    for (int64_t k = 0; k < g.size(); ++k) g[k] *= inv;
  }

  std::vector<uint8_t> mask;
  const std::vector<uint8_t>* mask_ptr = nullptr;
  if (scope != StepScope::kAll) {
    mask = model.pss_mask(scope == StepScope::kSelectorOnly);
    mask_ptr = &mask;
  }
  sgd_step(model.params(), grads, SgdConfig{lr, cfg.momentum, cfg.weight_decay}, mask_ptr);

  LossValues lv;
  lv.l_cls = sums.v[0] * inv;
  lv.l_reg = sums.v[1] * inv;
  lv.l_ctr = sums.v[2] * inv;
  lv.l_pss = sums.v[3] * inv;
  lv.l_rank = sums.v[4] * inv;
  lv.total = sums.v[5] * inv;
  return lv;
}

namespace {

void check_run_inputs(const Detector& model, const std::vector<Scene>& dataset, const TrainConfig& cfg,
                      TrainMode expected, const char* fn) {
  validate_config(cfg, model.config());
  if (cfg.mode != expected) {
    throw std::invalid_argument(std::string(fn) + ": config selects the other training mode");
  }
  if (dataset.empty()) throw std::invalid_argument(std::string(fn) + ": empty dataset");
}

void log_header(std::ostream* log) {
  if (log) *log << "epoch,step,lr,l_cls,l_reg,l_ctr,l_pss,l_rank,total\n";
}

}  // namespace

void train_end_to_end(Detector& model, const std::vector<Scene>& dataset, const TrainConfig& cfg, std::ostream* log,
                      const EpochHook& hook) {
  check_run_inputs(model, dataset, cfg, TrainMode::kEndToEnd, "train_end_to_end");
  log_header(log);
  int steps = 0;
  run_phase(model, dataset, cfg, StepScope::kAll, cfg.epochs, 0, log, hook, &steps);
}

void train_two_step_phase1(Detector& model, const std::vector<Scene>& dataset, const TrainConfig& cfg,
                           std::ostream* log, const EpochHook& hook) {
  check_run_inputs(model, dataset, cfg, TrainMode::kTwoStep, "train_two_step");
  log_header(log);
  int steps = 0;
  run_phase(model, dataset, cfg, StepScope::kDetectorOnly, cfg.phase1_epochs, 0, log, hook, &steps);
}

void train_two_step_phase2(Detector& model, const std::vector<Scene>& dataset, const TrainConfig& cfg,
                           std::ostream* log, const EpochHook& hook) {
  check_run_inputs(model, dataset, cfg, TrainMode::kTwoStep, "train_two_step");
  log_header(log);
  int steps = 0;
  run_phase(model, dataset, cfg, StepScope::kSelectorOnly, cfg.phase2_epochs, cfg.phase1_epochs, log, hook, &steps);
}

void train_two_step(Detector& model, const std::vector<Scene>& dataset, const TrainConfig& cfg, std::ostream* log,
                    const EpochHook& hook) {
  check_run_inputs(model, dataset, cfg, TrainMode::kTwoStep, "train_two_step");
  log_header(log);
  int steps = 0;
  run_phase(model, dataset, cfg, StepScope::kDetectorOnly, cfg.phase1_epochs, 0, log, hook, &steps);
  run_phase(model, dataset, cfg, StepScope::kSelectorOnly, cfg.phase2_epochs, cfg.phase1_epochs, log, hook, &steps);
}

}  // namespace pssdet

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
#include <functional>
#include <iosfwd>
#include <vector>

#include "core/assign.hpp"
#include "core/data_synth.hpp"
#include "core/model.hpp"

namespace pssdet {

enum class AssignerKind { kFcos, kAtss };
enum class TrainMode { kEndToEnd, kTwoStep };

struct TrainConfig {
  int epochs = 24;
  int batch_size = 8;
  double lr = 0.01;
  std::vector<int> lr_decay_epochs = {16, 22};
  double lr_decay_factor = 0.1;
  // Linear ramp from lr/warmup_steps up to lr over the first optimizer steps
  // of each phase; momentum otherwise snowballs the large early gradients of
  // the focal objective into divergence. 0 disables.
  int warmup_steps = 100;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lambda1 = 1.0;   // selector loss weight
  double lambda2 = 0.25;  // ranking loss weight
  double alpha = 0.8;     // quality mix between score and IoU
  Matcher matcher = Matcher::kHungarian;
  QualityMode quality = QualityMode::kMul;
  AssignerKind assigner = AssignerKind::kFcos;
  bool detach_partners = true;
  double rank_margin = 0.5;
  int rank_negatives = 3;
  TrainMode mode = TrainMode::kEndToEnd;
  // Two-step lengths; decay epochs are rescaled into each phase
  // proportionally to their position in the reference schedule.
  int phase1_epochs = 16;
  int phase2_epochs = 8;
  bool use_hflip = true;
  int snapshot_every = 6;  // epochs between hook calls, 0 disables
  uint64_t seed = 0;
};

// Throws invalid_argument naming the offending field; the detector config is
// needed to reject selector losses on a model built without the head.
void validate_config(const TrainConfig& cfg, const DetectorConfig& model_cfg);

struct LossValues {
  double l_cls = 0, l_reg = 0, l_ctr = 0, l_pss = 0, l_rank = 0, total = 0;
};

// Which parameters a step updates and which loss terms it builds. The
// two-step phases freeze the complementary half bitwise.
enum class StepScope { kAll, kDetectorOnly, kSelectorOnly };

// One SGD update from the batch-mean gradient of the combined loss. Labels
// are assigned per image: dense one-to-many targets from the configured
// assigner, then the one-to-one selector target rebuilt from this step's own
// detached forward outputs. Throws runtime_error with a term dump when any
// loss goes non-finite.
LossValues train_step(Detector& model, const std::vector<const Scene*>& batch, const TrainConfig& cfg, double lr,
                      StepScope scope = StepScope::kAll);

// Called after selected epochs (and always after the last one) so callers
// can evaluate or snapshot the model.
using EpochHook = std::function<void(int epoch, const Detector& model)>;

// Full schedule over the dataset, one CSV row per optimizer step:
// epoch,step,lr,l_cls,l_reg,l_ctr,l_pss,l_rank,total. Shuffling and flip
// augmentation draw from streams derived of cfg.seed, so a (seed, config,
// dataset) triple always produces the same parameters.
void train_end_to_end(Detector& model, const std::vector<Scene>& dataset, const TrainConfig& cfg, std::ostream* log,
                      const EpochHook& hook = nullptr);

// Phase 1 trains the detector with the selector head frozen and its losses
// off; phase 2 freezes every detector parameter and fits only the selector.
void train_two_step(Detector& model, const std::vector<Scene>& dataset, const TrainConfig& cfg, std::ostream* log,
                    const EpochHook& hook = nullptr);

// The phases separately, so sweeps can reuse one phase-1 checkpoint for
// several selector variants. train_two_step is phase 1 followed by phase 2.
void train_two_step_phase1(Detector& model, const std::vector<Scene>& dataset, const TrainConfig& cfg,
                           std::ostream* log, const EpochHook& hook = nullptr);
void train_two_step_phase2(Detector& model, const std::vector<Scene>& dataset, const TrainConfig& cfg,
                           std::ostream* log, const EpochHook& hook = nullptr);

}  // namespace pssdet

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
#include <utility>
#include <vector>

#include "core/optim.hpp"
#include "core/tensor.hpp"

namespace pssdet {

// Binary checkpoint, little endian throughout:
//   "PSSD" | u32 version | u32 param count | u32 config length | config bytes
//   then per parameter: u16 name length | name | u8 rank | u32 dims | f32 data
// config is a JSON blob describing the run; empty string writes length 0.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> params;
  std::string config_json;
};

void save_checkpoint(const std::string& path, const ParamSet& params, const std::string& config_json = "");
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into an existing parameter set. Every name must
// resolve and shapes must match; velocity buffers are reset to zero.
void restore_params(ParamSet& params, const Checkpoint& ckpt);

}  // namespace pssdet

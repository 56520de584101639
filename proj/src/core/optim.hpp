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
#include <unordered_map>
#include <vector>

#include "core/tensor.hpp"

namespace pssdet {

struct Param {
  std::string name;
  Tensor value;
  Tensor velocity;
};

// Named parameters in a stable insertion order. Order is part of the training
// contract: gradient accumulation and updates always walk it front to back.
class ParamSet {
 public:
  int add(std::string name, Tensor value);
  int index_of(std::string_view name) const;  // -1 when absent
  Param& at(int i) { return params_[static_cast<size_t>(i)]; }
  const Param& at(int i) const { return params_[static_cast<size_t>(i)]; }
  int size() const { return static_cast<int>(params_.size()); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;
};

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// v <- momentum * v + g + weight_decay * p; p <- p - lr * v.
// Masked-out parameters are left completely untouched, including their
// velocity and weight decay, which is what freezing a branch means here.
void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, const SgdConfig& cfg,
              const std::vector<uint8_t>* update_mask = nullptr);

}  // namespace pssdet

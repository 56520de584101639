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

#include "core/optim.hpp"

#include <stdexcept>

namespace pssdet {

int ParamSet::add(std::string name, Tensor value) {
  if (index_.count(name) != 0) throw std::invalid_argument("ParamSet: duplicate parameter name " + name);
  const int id = static_cast<int>(params_.size());
  index_.emplace(name, id);
  Tensor velocity(value.shape());
  params_.push_back(Param{std::move(name), std::move(value), std::move(velocity)});
  return id;
}

int ParamSet::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, const SgdConfig& cfg,
              const std::vector<uint8_t>* update_mask) {
  if (static_cast<int>(grads.size()) != params.size()) {
    throw std::invalid_argument("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params.size()) + " parameters");
  }
  if (update_mask && static_cast<int>(update_mask->size()) != params.size()) {
    throw std::invalid_argument("sgd_step: mask size does not match parameter count");
  }
  for (int k = 0; k < params.size(); ++k) {
    if (update_mask && (*update_mask)[static_cast<size_t>(k)] == 0) continue;
    Param& p = params.at(k);
    const Tensor& g = grads[static_cast<size_t>(k)];
    if (!g.same_shape(p.value)) {
      throw std::invalid_argument("sgd_step: gradient shape " + shape_to_string(g.shape()) + " for parameter " +
                                  p.name + " of shape " + shape_to_string(p.value.shape()));
    }
    for (int64_t i = 0; i < p.value.size(); ++i) {
      p.velocity[i] = cfg.momentum * p.velocity[i] + g[i] + cfg.weight_decay * p.value[i];
      p.value[i] -= cfg.lr * p.velocity[i];
    }
  }
}

}  // namespace pssdet

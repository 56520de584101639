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

#include "core/anchors.hpp"

#include <stdexcept>
#include <string>

namespace pssdet {

AnchorLayout::AnchorLayout(int img_h, int img_w, const std::vector<int>& strides) {
  if (img_h < 1 || img_w < 1 || strides.empty()) throw std::invalid_argument("AnchorLayout: empty image or stride list");
  levels_.reserve(strides.size());
  for (size_t i = 0; i < strides.size(); ++i) {
    const int s = strides[i];
    if (s < 1) throw std::invalid_argument("AnchorLayout: stride must be positive");
    if (i > 0 && s <= strides[i - 1]) throw std::invalid_argument("AnchorLayout: strides must be increasing");
    // Matches repeated stride-2 halving with ceil rounding at each step.
    LevelLayout lvl;
    lvl.stride = s;
    lvl.h = (img_h + s - 1) / s;
    lvl.w = (img_w + s - 1) / s;
    lvl.offset = total_;
    total_ += lvl.cells();
    levels_.push_back(lvl);
  }
}

int AnchorLayout::flat_index(int level, int iy, int ix) const {
  const LevelLayout& lvl = levels_[static_cast<size_t>(level)];
  if (iy < 0 || iy >= lvl.h || ix < 0 || ix >= lvl.w) {
    throw std::invalid_argument("AnchorLayout: cell (" + std::to_string(iy) + ", " + std::to_string(ix) +
                                ") outside level of size " + std::to_string(lvl.h) + "x" + std::to_string(lvl.w));
  }
  return lvl.offset + iy * lvl.w + ix;
}

AnchorPoint AnchorLayout::point(int flat) const {
  if (flat < 0 || flat >= total_) throw std::invalid_argument("AnchorLayout: flat index " + std::to_string(flat) + " out of range");
  for (size_t li = 0; li < levels_.size(); ++li) {
    const LevelLayout& lvl = levels_[li];
    if (flat < lvl.offset + lvl.cells()) {
      const int cell = flat - lvl.offset;
      AnchorPoint p;
      p.level = static_cast<int>(li);
      p.stride = lvl.stride;
      p.iy = cell / lvl.w;
      p.ix = cell % lvl.w;
      p.x = (p.ix + 0.5) * lvl.stride;
      p.y = (p.iy + 0.5) * lvl.stride;
      return p;
    }
  }
  throw std::logic_error("AnchorLayout: unreachable");
}

}  // namespace pssdet

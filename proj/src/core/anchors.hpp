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

namespace pssdet {

// One pyramid level. offset is the flat index of this level's (0, 0) cell;
// flat indices enumerate levels in order, row major within a level.
struct LevelLayout {
  int stride = 0;
  int h = 0;
  int w = 0;
  int offset = 0;

  int cells() const { return h * w; }
};

struct AnchorPoint {
  double x = 0;  // image coordinates of the cell center, (ix + 0.5) * stride
  double y = 0;
  int level = 0;
  int stride = 0;
  int iy = 0;
  int ix = 0;
};

// Flat enumeration of all pyramid cells for one image size.
class AnchorLayout {
 public:
  AnchorLayout() = default;
  AnchorLayout(int img_h, int img_w, const std::vector<int>& strides);

  int total() const { return total_; }
  int num_levels() const { return static_cast<int>(levels_.size()); }
  const LevelLayout& level(int i) const { return levels_[static_cast<size_t>(i)]; }
  const std::vector<LevelLayout>& levels() const { return levels_; }

  int flat_index(int level, int iy, int ix) const;
  AnchorPoint point(int flat) const;

 private:
  std::vector<LevelLayout> levels_;
  int total_ = 0;
};

}  // namespace pssdet

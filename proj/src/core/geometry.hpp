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

#include <algorithm>
#include <cmath>

namespace pssdet {

// Axis-aligned box in image pixels, corners (x1, y1) top-left and
// (x2, y2) bottom-right, x2 > x1 and y2 > y1 when valid.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double w() const { return x2 - x1; }
  double h() const { return y2 - y1; }
  double area() const { return w() * h(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x2 > x1 && y2 > y1; }
  // Strict interior, consistent with all four side distances being positive.
  bool contains(double px, double py) const { return px > x1 && px < x2 && py > y1 && py < y2; }
};

double iou(const Box& a, const Box& b);

// iou minus (hull - union) / hull; in [-1, 1], 1 only for identical boxes.
double giou(const Box& a, const Box& b);

// Distances from a location to the four box sides, in units of the level
// stride so regression targets live on a similar scale across levels.
struct LtrbTarget {
  double l = 0, t = 0, r = 0, b = 0;

  double max_side() const { return std::max(std::max(l, t), std::max(r, b)); }
  bool inside() const { return l > 0 && t > 0 && r > 0 && b > 0; }
};

LtrbTarget encode_ltrb(double px, double py, const Box& box, int stride);
Box decode_ltrb(double px, double py, const LtrbTarget& d, int stride);

// sqrt of the product of the two per-axis balance ratios min/max; 1 at the
// box center, falls toward 0 near the sides.
double centerness_target(const LtrbTarget& d);

// Box around the center of gt with the given half-side, clipped to gt.
Box center_region(const Box& gt, double radius_px);

// True iff the point sits within radius * stride of the box center on both
// axes and strictly inside the box.
bool center_region_contains(double px, double py, const Box& box, double radius, int stride);

}  // namespace pssdet

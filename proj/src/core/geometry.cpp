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

#include "core/geometry.hpp"

namespace pssdet {

namespace {

double intersection(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return w > 0 && h > 0 ? w * h : 0.0;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double inter = intersection(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double giou(const Box& a, const Box& b) {
  const double i = iou(a, b);
  const double uni = a.area() + b.area() - intersection(a, b);
  const double hull = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) * (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  if (hull <= 0) return i;
  return i - (hull - uni) / hull;
}

LtrbTarget encode_ltrb(double px, double py, const Box& box, int stride) {
  const double s = static_cast<double>(stride);
  return LtrbTarget{(px - box.x1) / s, (py - box.y1) / s, (box.x2 - px) / s, (box.y2 - py) / s};
}

Box decode_ltrb(double px, double py, const LtrbTarget& d, int stride) {
  const double s = static_cast<double>(stride);
  return Box{px - d.l * s, py - d.t * s, px + d.r * s, py + d.b * s};
}

double centerness_target(const LtrbTarget& d) {
  if (d.l <= 0 || d.t <= 0 || d.r <= 0 || d.b <= 0) return 0.0;
  const double lr = std::min(d.l, d.r) / std::max(d.l, d.r);
  const double tb = std::min(d.t, d.b) / std::max(d.t, d.b);
  return std::sqrt(lr * tb);
}

Box center_region(const Box& gt, double radius_px) {
  return Box{std::max(gt.x1, gt.cx() - radius_px), std::max(gt.y1, gt.cy() - radius_px),
             std::min(gt.x2, gt.cx() + radius_px), std::min(gt.y2, gt.cy() + radius_px)};
}

bool center_region_contains(double px, double py, const Box& box, double radius, int stride) {
  return center_region(box, radius * stride).contains(px, py);
}

}  // namespace pssdet

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

#include <stdexcept>

#include "doctest.h"
#include "core/anchors.hpp"
#include "core/geometry.hpp"
#include "core/rng.hpp"

using namespace pssdet;

namespace {

Box random_box(Rng& rng, double extent) {
  const double x1 = rng.uniform(0, extent - 2);
  const double y1 = rng.uniform(0, extent - 2);
  return Box{x1, y1, x1 + rng.uniform(1, extent - x1), y1 + rng.uniform(1, extent - y1)};
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("iou on hand-picked boxes") {
  Box a{0, 0, 2, 2};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, Box{1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(a, Box{1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0));
  CHECK(iou(a, Box{5, 5, 6, 6}) == 0.0);
  CHECK(iou(a, Box{2, 0, 4, 2}) == 0.0);
}

TEST_CASE("giou on hand-picked boxes") {
  Box a{0, 0, 1, 1};
  CHECK(giou(a, a) == doctest::Approx(1.0));
  // disjoint, hull area 3, union 2
  CHECK(giou(a, Box{2, 0, 3, 1}) == doctest::Approx(-1.0 / 3.0));
  CHECK(giou(Box{0, 0, 2, 2}, Box{1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0 - 2.0 / 9.0));
  // unit boxes drifting apart
  CHECK(giou(a, Box{1000, 0, 1001, 1}) < -0.99);
}

TEST_CASE("giou never exceeds iou and stays within [-1, 1]") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    Box a = random_box(rng, 64);
    Box b = random_box(rng, 64);
    const double g = giou(a, b);
    CHECK(g <= iou(a, b) + 1e-12);
    CHECK(g >= -1.0 - 1e-12);
    CHECK(g <= 1.0 + 1e-12);
  }
}

TEST_CASE("ltrb encoding round-trips through decoding") {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    Box box = random_box(rng, 64);
    const double px = rng.uniform(box.x1 + 1e-3, box.x2 - 1e-3);
    const double py = rng.uniform(box.y1 + 1e-3, box.y2 - 1e-3);
    for (int stride : {4, 8, 16}) {
      LtrbTarget d = encode_ltrb(px, py, box, stride);
      CHECK(d.inside());
      Box back = decode_ltrb(px, py, d, stride);
      CHECK(back.x1 == doctest::Approx(box.x1).epsilon(1e-12));
      CHECK(back.y1 == doctest::Approx(box.y1).epsilon(1e-12));
      CHECK(back.x2 == doctest::Approx(box.x2).epsilon(1e-12));
      CHECK(back.y2 == doctest::Approx(box.y2).epsilon(1e-12));
    }
  }
}

TEST_CASE("ltrb distances are measured in stride units") {
  LtrbTarget d = encode_ltrb(8, 8, Box{0, 0, 16, 32}, 8);
  CHECK(d.l == doctest::Approx(1.0));
  CHECK(d.t == doctest::Approx(1.0));
  CHECK(d.r == doctest::Approx(1.0));
  CHECK(d.b == doctest::Approx(3.0));
  CHECK(d.max_side() == doctest::Approx(3.0));
}

TEST_CASE("centerness is 1 at the center and drops off-center") {
  Box box{0, 0, 4, 2};
  CHECK(centerness_target(encode_ltrb(2, 1, box, 1)) == doctest::Approx(1.0));
  // l=1 r=3, t=0.5 b=1.5
  CHECK(centerness_target(encode_ltrb(1, 0.5, box, 1)) == doctest::Approx(1.0 / 3.0));
  CHECK(centerness_target(LtrbTarget{1, 2, 3, 2}) == doctest::Approx(std::sqrt(1.0 / 3.0)));
  // point on the box edge
  CHECK(centerness_target(encode_ltrb(0, 1, box, 1)) == 0.0);

  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    Box b = random_box(rng, 64);
    const double px = rng.uniform(b.x1 + 1e-3, b.x2 - 1e-3);
    const double py = rng.uniform(b.y1 + 1e-3, b.y2 - 1e-3);
    const double c = centerness_target(encode_ltrb(px, py, b, 4));
    CHECK(c > 0.0);
    CHECK(c <= 1.0 + 1e-12);
  }
}

TEST_CASE("center_region clips to the box") {
  Box big{0, 0, 10, 10};
  Box r = center_region(big, 2);
  CHECK(r.x1 == doctest::Approx(3.0));
  CHECK(r.y1 == doctest::Approx(3.0));
  CHECK(r.x2 == doctest::Approx(7.0));
  CHECK(r.y2 == doctest::Approx(7.0));

  Box small{0, 0, 2, 2};
  Box rs = center_region(small, 3);
  CHECK(rs.x1 == 0.0);
  CHECK(rs.y2 == 2.0);
}

TEST_CASE("center region membership thresholds at radius times stride") {
  Box big{0, 0, 100, 100};
  CHECK(center_region_contains(50, 50, big, 1.5, 8));
  CHECK(center_region_contains(58, 50, big, 1.5, 8));   // 8px from center, limit 12
  CHECK_FALSE(center_region_contains(66, 50, big, 1.5, 8));  // 16px
  CHECK_FALSE(center_region_contains(120, 50, big, 1.5, 8));
}

TEST_CASE("contains uses the strict interior") {
  Box b{0, 0, 4, 4};
  CHECK(b.contains(2, 2));
  CHECK_FALSE(b.contains(0, 2));
  CHECK_FALSE(b.contains(2, 4));
}

TEST_CASE("anchor layout enumerates pyramid cells level by level") {
  AnchorLayout layout(64, 64, {4, 8, 16});
  CHECK(layout.total() == 256 + 64 + 16);
  CHECK(layout.num_levels() == 3);
  CHECK(layout.level(0).h == 16);
  CHECK(layout.level(1).offset == 256);
  CHECK(layout.level(2).offset == 320);

  AnchorPoint p0 = layout.point(0);
  CHECK(p0.x == doctest::Approx(2.0));
  CHECK(p0.y == doctest::Approx(2.0));
  CHECK(p0.stride == 4);

  AnchorPoint p = layout.point(layout.flat_index(1, 2, 3));
  CHECK(p.level == 1);
  CHECK(p.iy == 2);
  CHECK(p.ix == 3);
  CHECK(p.x == doctest::Approx((3 + 0.5) * 8));

  AnchorPoint last = layout.point(layout.total() - 1);
  CHECK(last.level == 2);
  CHECK(last.iy == 3);
  CHECK(last.ix == 3);

  CHECK_THROWS_AS((void)layout.point(layout.total()), std::invalid_argument);
  CHECK_THROWS_AS((void)layout.flat_index(0, 16, 0), std::invalid_argument);
}

TEST_CASE("anchor layout rounds odd sizes up, matching stride-2 stacks") {
  AnchorLayout layout(65, 33, {4, 8});
  CHECK(layout.level(0).h == 17);
  CHECK(layout.level(0).w == 9);
  CHECK(layout.level(1).h == 9);
  CHECK(layout.level(1).w == 5);
}

}  // TEST_SUITE

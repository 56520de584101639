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

#include "core/assign.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pssdet {

namespace {

// One tentative owner per anchor; a smaller instance evicts a larger one.
struct ClaimMap {
  std::vector<int> owner;
  std::vector<double> area;

  explicit ClaimMap(int total) : owner(static_cast<size_t>(total), -1), area(static_cast<size_t>(total), 0.0) {}

  void claim(int anchor, int instance, double inst_area) {
    auto ia = static_cast<size_t>(anchor);
    if (owner[ia] < 0 || inst_area < area[ia]) {
      owner[ia] = instance;
      area[ia] = inst_area;
    }
  }
};

OneToManyLabels labels_from_claims(const AnchorLayout& layout, const std::vector<GtInstance>& instances,
                                   const ClaimMap& claims) {
  const int total = layout.total();
  OneToManyLabels out;
  out.cls.assign(static_cast<size_t>(total), -1);
  out.owner = claims.owner;
  out.ltrb.assign(static_cast<size_t>(total), LtrbTarget{});
  out.ctr.assign(static_cast<size_t>(total), 0.0);
  std::vector<int> hits(instances.size(), 0);
  for (int a = 0; a < total; ++a) {
    const int j = out.owner[static_cast<size_t>(a)];
    if (j < 0) continue;
    const AnchorPoint p = layout.point(a);
    const GtInstance& inst = instances[static_cast<size_t>(j)];
    out.cls[static_cast<size_t>(a)] = inst.cls;
    out.ltrb[static_cast<size_t>(a)] = encode_ltrb(p.x, p.y, inst.box, p.stride);
    out.ctr[static_cast<size_t>(a)] = centerness_target(out.ltrb[static_cast<size_t>(a)]);
    ++out.num_pos;
    ++hits[static_cast<size_t>(j)];
  }
  for (size_t j = 0; j < instances.size(); ++j) {
    if (hits[j] == 0) out.unmatched.push_back(static_cast<int>(j));
  }
  return out;
}

void check_ranges(const AnchorLayout& layout, const AssignConfig& cfg) {
  if (static_cast<int>(cfg.range_max.size()) != layout.num_levels()) {
    throw std::invalid_argument("assign: " + std::to_string(cfg.range_max.size()) + " level ranges for " +
                                std::to_string(layout.num_levels()) + " levels");
  }
}

double quality_entry(double p, double overlap, double alpha, QualityMode mode) {
  if (mode == QualityMode::kMul) return std::pow(p, 1.0 - alpha) * std::pow(overlap, alpha);
  return (1.0 - alpha) * p + alpha * overlap;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Minimum-cost perfect matching on a square matrix via shortest augmenting
// paths with potentials. Returns, per column, the matched row.
std::vector<int> square_min_assignment(const Mat& cost) {
  const int n = cost.rows;
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_of_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j) row_of_col[static_cast<size_t>(j - 1)] = p[static_cast<size_t>(j)] - 1;
  return row_of_col;
}

void require_feasible(const Mat& q, const char* op) {
  if (q.rows < q.cols) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(q.cols) + " instances cannot be matched to " +
                                std::to_string(q.rows) + " anchors");
  }
}

}  // namespace

AssignConfig assign_config_for_strides(const std::vector<int>& strides) {
  if (strides.empty()) throw std::invalid_argument("assign_config_for_strides: strides must be non-empty");
  AssignConfig cfg;
  cfg.range_max.clear();
  for (size_t i = 0; i < strides.size(); ++i) {
    const bool last = i + 1 == strides.size();
    cfg.range_max.push_back(last ? std::numeric_limits<double>::infinity() : 4.0 * strides[i]);
  }
  return cfg;
}

OneToManyLabels fcos_assign(const AnchorLayout& layout, const std::vector<GtInstance>& instances,
                            const AssignConfig& cfg) {
  check_ranges(layout, cfg);
  ClaimMap claims(layout.total());
  for (size_t j = 0; j < instances.size(); ++j) {
    const GtInstance& inst = instances[j];
    for (int li = 0; li < layout.num_levels(); ++li) {
      const LevelLayout& lvl = layout.level(li);
      const double lo = li == 0 ? 0.0 : cfg.range_max[static_cast<size_t>(li) - 1];
      const double hi = cfg.range_max[static_cast<size_t>(li)];
      const Box region = center_region(inst.box, cfg.center_radius * lvl.stride);
      for (int iy = 0; iy < lvl.h; ++iy) {
        for (int ix = 0; ix < lvl.w; ++ix) {
          const double px = (ix + 0.5) * lvl.stride;
          const double py = (iy + 0.5) * lvl.stride;
          if (!region.contains(px, py)) continue;
          const LtrbTarget d = encode_ltrb(px, py, inst.box, lvl.stride);
          if (!d.inside()) continue;
          const double m = d.max_side() * lvl.stride;
          if (m <= lo || m > hi) continue;
          claims.claim(lvl.offset + iy * lvl.w + ix, static_cast<int>(j), inst.box.area());
        }
      }
    }
  }
  return labels_from_claims(layout, instances, claims);
}

OneToManyLabels atss_assign(const AnchorLayout& layout, const std::vector<GtInstance>& instances,
                            const AssignConfig& cfg) {
  check_ranges(layout, cfg);
  if (cfg.atss_top_k < 1) throw std::invalid_argument("assign: atss_top_k must be >= 1");
  ClaimMap claims(layout.total());
  for (size_t j = 0; j < instances.size(); ++j) {
    const GtInstance& inst = instances[j];
    const double cx = inst.box.cx();
    const double cy = inst.box.cy();

    std::vector<int> cand;
    for (int li = 0; li < layout.num_levels(); ++li) {
      const LevelLayout& lvl = layout.level(li);
      std::vector<std::pair<double, int>> by_dist;
      by_dist.reserve(static_cast<size_t>(lvl.cells()));
      for (int iy = 0; iy < lvl.h; ++iy) {
        for (int ix = 0; ix < lvl.w; ++ix) {
          const double dx = (ix + 0.5) * lvl.stride - cx;
          const double dy = (iy + 0.5) * lvl.stride - cy;
          by_dist.emplace_back(dx * dx + dy * dy, lvl.offset + iy * lvl.w + ix);
        }
      }
      const size_t k = std::min<size_t>(static_cast<size_t>(cfg.atss_top_k), by_dist.size());
      std::partial_sort(by_dist.begin(), by_dist.begin() + static_cast<std::ptrdiff_t>(k), by_dist.end());
      for (size_t t = 0; t < k; ++t) cand.push_back(by_dist[t].second);
    }

    std::vector<double> overlaps(cand.size());
    for (size_t t = 0; t < cand.size(); ++t) {
      const AnchorPoint p = layout.point(cand[t]);
      const double half = 0.5 * cfg.atss_anchor_side_factor * p.stride;
      overlaps[t] = iou(Box{p.x - half, p.y - half, p.x + half, p.y + half}, inst.box);
    }
    double mean = 0.0;
    for (double o : overlaps) mean += o;
    mean /= static_cast<double>(overlaps.size());
    double var = 0.0;
    for (double o : overlaps) var += (o - mean) * (o - mean);
    const double thr = mean + std::sqrt(var / static_cast<double>(overlaps.size()));

    for (size_t t = 0; t < cand.size(); ++t) {
      if (overlaps[t] < thr) continue;
      const AnchorPoint p = layout.point(cand[t]);
      if (!inst.box.contains(p.x, p.y)) continue;
      claims.claim(cand[t], static_cast<int>(j), inst.box.area());
    }
  }
  return labels_from_claims(layout, instances, claims);
}

CandidateSet candidates_from(const OneToManyLabels& labels, int num_instances) {
  CandidateSet set;
  set.omega.assign(static_cast<size_t>(num_instances), {});
  for (size_t a = 0; a < labels.owner.size(); ++a) {
    const int j = labels.owner[a];
    if (j >= 0) set.omega[static_cast<size_t>(j)].push_back(static_cast<int>(a));
  }
  return set;
}

Mat quality_matrix(const OutputSnapshot& outputs, const std::vector<GtInstance>& instances,
                   const CandidateSet& candidates, double alpha, QualityMode mode) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("quality_matrix: alpha must lie in [0, 1]");
  if (candidates.omega.size() != instances.size()) {
    throw std::invalid_argument("quality_matrix: candidate sets do not match instance count");
  }
  const int total = static_cast<int>(outputs.boxes.size());
  Mat q(total, static_cast<int>(instances.size()));
  for (size_t j = 0; j < instances.size(); ++j) {
    const GtInstance& inst = instances[j];
    if (inst.cls < 0 || inst.cls >= outputs.num_classes) {
      throw std::invalid_argument("quality_matrix: class " + std::to_string(inst.cls) + " outside model with " +
                                  std::to_string(outputs.num_classes) + " classes");
    }
    for (int a : candidates.omega[j]) {
      const double p = outputs.pss_prob[static_cast<size_t>(a)] * outputs.cls_at(a, inst.cls) *
                       outputs.ctr_prob[static_cast<size_t>(a)];
      q(a, static_cast<int>(j)) = quality_entry(p, iou(outputs.boxes[static_cast<size_t>(a)], inst.box), alpha, mode);
    }
  }
  return q;
}

OneToOneAssignment hungarian_match(const Mat& q) {
  require_feasible(q, "hungarian_match");
  OneToOneAssignment out;
  out.anchor_of.assign(static_cast<size_t>(q.cols), -1);
  out.quality_of.assign(static_cast<size_t>(q.cols), 0.0);
  if (q.cols == 0) return out;

  // Negate into a square cost matrix; extra columns are zero-cost sinks for
  // the anchors that stay unmatched.
  Mat cost(q.rows, q.rows);
  for (int i = 0; i < q.rows; ++i) {
    for (int j = 0; j < q.cols; ++j) cost(i, j) = -q(i, j);
  }
  const std::vector<int> row_of_col = square_min_assignment(cost);

  std::vector<char> taken(static_cast<size_t>(q.rows), 0);
  for (int j = 0; j < q.cols; ++j) {
    out.anchor_of[static_cast<size_t>(j)] = row_of_col[static_cast<size_t>(j)];
    taken[static_cast<size_t>(row_of_col[static_cast<size_t>(j)])] = 1;
  }
  // Within a column, an equal-quality free anchor with a lower index wins.
  for (int j = 0; j < q.cols; ++j) {
    int& cur = out.anchor_of[static_cast<size_t>(j)];
    for (int i = 0; i < cur; ++i) {
      if (!taken[static_cast<size_t>(i)] && q(i, j) == q(cur, j)) {
        taken[static_cast<size_t>(cur)] = 0;
        taken[static_cast<size_t>(i)] = 1;
        cur = i;
        break;
      }
    }
    out.quality_of[static_cast<size_t>(j)] = q(cur, j);
  }
  return out;
}

OneToOneAssignment top_one_match(const Mat& q) {
  require_feasible(q, "top_one_match");
  OneToOneAssignment out;
  out.anchor_of.assign(static_cast<size_t>(q.cols), -1);
  out.quality_of.assign(static_cast<size_t>(q.cols), 0.0);

  std::vector<int> order(static_cast<size_t>(q.cols));
  std::vector<double> best(static_cast<size_t>(q.cols), -kInf);
  for (int j = 0; j < q.cols; ++j) {
    order[static_cast<size_t>(j)] = j;
    for (int i = 0; i < q.rows; ++i) best[static_cast<size_t>(j)] = std::max(best[static_cast<size_t>(j)], q(i, j));
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return best[static_cast<size_t>(a)] > best[static_cast<size_t>(b)]; });

  std::vector<char> taken(static_cast<size_t>(q.rows), 0);
  for (int j : order) {
    int pick = -1;
    for (int i = 0; i < q.rows; ++i) {
      if (taken[static_cast<size_t>(i)]) continue;
      if (pick < 0 || q(i, j) > q(pick, j)) pick = i;
    }
    taken[static_cast<size_t>(pick)] = 1;
    out.anchor_of[static_cast<size_t>(j)] = pick;
    out.quality_of[static_cast<size_t>(j)] = q(pick, j);
  }
  return out;
}

OneToOneAssignment one_to_one_assign(const OutputSnapshot& outputs, const std::vector<GtInstance>& instances,
                                     const CandidateSet& candidates, double alpha, QualityMode mode, Matcher matcher) {
  std::vector<int> rows;
  std::vector<int> live_cols;
  for (size_t j = 0; j < candidates.omega.size(); ++j) {
    if (candidates.omega[j].empty()) continue;
    live_cols.push_back(static_cast<int>(j));
    rows.insert(rows.end(), candidates.omega[j].begin(), candidates.omega[j].end());
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());

  OneToOneAssignment out;
  out.anchor_of.assign(instances.size(), -1);
  out.quality_of.assign(instances.size(), 0.0);
  if (live_cols.empty()) return out;

  const Mat full = quality_matrix(outputs, instances, candidates, alpha, mode);
  Mat q(static_cast<int>(rows.size()), static_cast<int>(live_cols.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < live_cols.size(); ++c) q(static_cast<int>(r), static_cast<int>(c)) = full(rows[r], live_cols[c]);
  }
  const OneToOneAssignment sub = matcher == Matcher::kHungarian ? hungarian_match(q) : top_one_match(q);
  for (size_t c = 0; c < live_cols.size(); ++c) {
    out.anchor_of[static_cast<size_t>(live_cols[c])] = rows[static_cast<size_t>(sub.anchor_of[c])];
    out.quality_of[static_cast<size_t>(live_cols[c])] = sub.quality_of[c];
  }
  return out;
}

}  // namespace pssdet

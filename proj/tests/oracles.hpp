/* Copyright 2026 The mtdet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
// Independent reference implementations shared by the unit tests and the
// acceptance runner. Nothing here calls the code it is used to check.
#ifndef MTDET_TESTS_ORACLES_HPP_
#define MTDET_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mtdet/geometry.hpp"
#include "mtdet/loss.hpp"
#include "mtdet/model.hpp"
#include "mtdet/rng.hpp"

namespace mtdet::testing {

inline BoundingBox RandomBox(Rng& rng, double extent = 100.0) {
  const double x1 = rng.Uniform(0, extent), y1 = rng.Uniform(0, extent);
  return {x1, y1, x1 + rng.Uniform(0.5, extent), y1 + rng.Uniform(0.5, extent)};
}

inline BoundingBox RandomGridBox(Rng& rng) {
  const int x1 = static_cast<int>(rng.UniformInt(0, 30)), y1 = static_cast<int>(rng.UniformInt(0, 30));
  return {double(x1), double(y1), double(x1 + rng.UniformInt(1, 20)), double(y1 + rng.UniformInt(1, 20))};
}

// Counts cells of side `cell` whose centers fall inside each box.
inline double RasterIou(const BoundingBox& a, const BoundingBox& b, double cell) {
  const double lo_x = std::min(a.x1, b.x1), hi_x = std::max(a.x2, b.x2);
  const double lo_y = std::min(a.y1, b.y1), hi_y = std::max(a.y2, b.y2);
  auto inside = [](const BoundingBox& r, double x, double y) {
    return x >= r.x1 && x < r.x2 && y >= r.y1 && y < r.y2;
  };
  long inter = 0, uni = 0;
  for (double y = lo_y + cell / 2; y < hi_y; y += cell) {
    for (double x = lo_x + cell / 2; x < hi_x; x += cell) {
      const bool ia = inside(a, x, y), ib = inside(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni ? static_cast<double>(inter) / uni : 0.0;
}

// Independent greedy: repeatedly take the best remaining box and drop every
// remaining box overlapping it at or above the threshold.
inline std::vector<int> GreedyOracle(const std::vector<ScoredBox>& boxes, double thr) {
  std::vector<int> alive(boxes.size());
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<int> kept;
  while (!alive.empty()) {
    int best = alive[0];
    for (int i : alive) {
      if (boxes[i].score > boxes[best].score || (boxes[i].score == boxes[best].score && i < best)) best = i;
    }
    kept.push_back(best);
    std::vector<int> next;
    for (int i : alive) {
      if (i != best && Iou(boxes[i].box, boxes[best].box) < thr) next.push_back(i);
    }
    alive = next;
  }
  return kept;
}

// Integrates the interpolated PR curve point by point: for every distinct
// recall level, the best precision at that recall or beyond.
inline double BruteForceAp(const std::vector<double>& scores, const std::vector<uint8_t>& tp, int64_t num_gt) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  std::vector<double> prec, rec;
  int hits = 0;
  for (size_t k = 0; k < order.size(); ++k) {
    hits += tp[order[k]];
    prec.push_back(double(hits) / double(k + 1));
    rec.push_back(double(hits) / double(num_gt));
  }
  std::vector<double> levels = rec;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double ap = 0, prev = 0;
  for (double r : levels) {
    double best = 0;
    for (size_t j = 0; j < rec.size(); ++j) {
      if (rec[j] >= r) best = std::max(best, prec[j]);
    }
    ap += (r - prev) * best;
    prev = r;
  }
  return ap;
}

// A small loss fixture with several anchors and regions of each kind. Box
// residuals stay away from the smooth-L1 knees.
inline StageOutputs<double> LossFixture(Rng& rng, int regions = 9, int classes_cols = 7) {
  StageOutputs<double> s;
  const int n = 12;
  for (int i = 0; i < n; ++i) {
    s.objectness.push_back(rng.Uniform(-3, 3));
    s.objectness_label.push_back(i % 3 == 0);
    for (int c = 0; c < 4; ++c) {
      s.anchor_deltas.push_back(rng.Uniform(-1, 1));
      const double off = (c % 2 ? 0.03 : 0.4) * (rng.Bernoulli(0.5) ? 1 : -1);  // both sides of beta = 1/9
      s.anchor_delta_targets.push_back(s.anchor_deltas.back() - off);
    }
  }
  s.num_regions = regions;
  s.genus_columns = 5;
  s.class_columns = classes_cols;
  for (int i = 0; i < regions; ++i) {
    for (int c = 0; c < s.genus_columns; ++c) s.genus_logits.push_back(rng.Uniform(-2, 2));
    for (int c = 0; c < s.class_columns; ++c) s.class_logits.push_back(rng.Uniform(-2, 2));
    const bool bg = i % 3 == 2;
    s.genus_target.push_back(bg ? 4 : i % 4);
    s.class_target.push_back(bg ? classes_cols - 1 : (i % 4) % 6);
    for (int c = 0; c < 4; ++c) {
      s.box_deltas.push_back(rng.Uniform(-2, 2));
      const double off = (c % 2 ? 0.4 : 1.7) * (rng.Bernoulli(0.5) ? 1 : -1);
      s.box_targets.push_back(s.box_deltas.back() - off);
    }
  }
  return s;
}

struct FdResult {
  size_t checked = 0;
  double worst = 0;  // largest relative deviation seen
  size_t worst_index = 0;
  double analytic = 0, numeric = 0;
};

// Central differences of the total loss against one field of the stage
// outputs. The denominator floor keeps near-zero entries from dominating.
inline FdResult FiniteDifference(StageOutputs<double> s, std::vector<double> StageOutputs<double>::*field,
                                 std::vector<double> StageGradients<double>::*grad_field, const LossWeights& w,
                                 double h = 1e-4) {
  StageGradients<double> g;
  ComputeLoss(s, w, {}, &g);
  auto& values = s.*field;
  const auto& analytic = g.*grad_field;
  FdResult r;
  if (values.size() != analytic.size()) {
    r.worst = INFINITY;
    return r;
  }
  for (size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = ComputeLoss(s, w).total;
    values[i] = saved - h;
    const double down = ComputeLoss(s, w).total;
    values[i] = saved;
    const double num = (up - down) / (2 * h);
    const double rel = std::abs(num - analytic[i]) / std::max(1e-3, std::abs(num));
    ++r.checked;
    if (!(rel <= r.worst)) {
      r.worst = rel;
      r.worst_index = i;
      r.analytic = analytic[i];
      r.numeric = num;
    }
  }
  return r;
}

}  // namespace mtdet::testing

#endif  // MTDET_TESTS_ORACLES_HPP_

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
#include "mtdet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mtdet/errors.hpp"

namespace mtdet {

bool BoundingBox::IsValid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x2 > x1 && y2 > y1;
}

void ValidateBox(const BoundingBox& box) {
  if (!box.IsValid()) {
    std::ostringstream os;
    os << "degenerate box (" << box.x1 << ", " << box.y1 << ", " << box.x2 << ", " << box.y2
       << ")";
    Fail(ErrorKind::kValidation, os.str());
  }
}

double IntersectionArea(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

double IouUnchecked(const BoundingBox& a, const BoundingBox& b) {
  const double inter = IntersectionArea(a, b);
  if (inter <= 0) return 0.0;
  const double uni = std::max(a.Area(), 0.0) + std::max(b.Area(), 0.0) - inter;
  return uni > 0 ? std::min(1.0, inter / uni) : 0.0;
}

double Iou(const BoundingBox& a, const BoundingBox& b) {
  ValidateBox(a);
  ValidateBox(b);
  if (a == b) return 1.0;
  return IouUnchecked(a, b);
}

BoundingBox ClipBox(const BoundingBox& box, double width, double height) {
  return {std::clamp(box.x1, 0.0, width), std::clamp(box.y1, 0.0, height),
          std::clamp(box.x2, 0.0, width), std::clamp(box.y2, 0.0, height)};
}

std::vector<AnchorShape> MakeAnchorShapes(double size, std::span<const double> ratios) {
  if (!(size > 0) || !std::isfinite(size)) {
    Fail(ErrorKind::kValidation, "anchor size must be positive");
  }
  std::vector<AnchorShape> shapes;
  shapes.reserve(ratios.size());
  for (double r : ratios) {
    if (!(r > 0) || !std::isfinite(r)) {
      Fail(ErrorKind::kValidation, "anchor ratio must be positive");
    }
    const double w = size / std::sqrt(r);
    shapes.push_back({w, w * r});
  }
  return shapes;
}

void AnchorGrid::Validate() const {
  if (ratios.empty() || sizes.empty()) Fail(ErrorKind::kValidation, "anchor grid is empty");
  if (sizes.size() != strides.size()) {
    Fail(ErrorKind::kValidation, "anchor grid needs exactly one size per pyramid level");
  }
  for (double r : ratios) {
    if (!(r > 0)) Fail(ErrorKind::kValidation, "anchor ratio must be positive");
  }
  for (double s : sizes) {
    if (!(s > 0)) Fail(ErrorKind::kValidation, "anchor size must be positive");
  }
  for (int s : strides) {
    if (s <= 0) Fail(ErrorKind::kValidation, "anchor stride must be positive");
  }
}

std::vector<BoundingBox> TileAnchors(const AnchorGrid& grid, std::span<const FeatureDims> dims) {
  grid.Validate();
  if (static_cast<int>(dims.size()) != grid.num_levels()) {
    Fail(ErrorKind::kValidation, "feature dims do not match the number of anchor levels");
  }
  size_t total = 0;
  for (const auto& d : dims) {
    if (d.height <= 0 || d.width <= 0) Fail(ErrorKind::kValidation, "feature dims must be positive");
    total += static_cast<size_t>(d.height) * d.width * grid.ratios.size();
  }
  std::vector<BoundingBox> anchors;
  anchors.reserve(total);
  for (int level = 0; level < grid.num_levels(); ++level) {
    const auto shapes = MakeAnchorShapes(grid.sizes[level], grid.ratios);
    const double stride = grid.strides[level];
    for (int row = 0; row < dims[level].height; ++row) {
      const double cy = (row + 0.5) * stride;
      for (int col = 0; col < dims[level].width; ++col) {
        const double cx = (col + 0.5) * stride;
        for (const auto& s : shapes) {
          anchors.push_back(
              {cx - 0.5 * s.width, cy - 0.5 * s.height, cx + 0.5 * s.width, cy + 0.5 * s.height});
        }
      }
    }
  }
  return anchors;
}

BoxDeltas EncodeDeltas(const BoundingBox& anchor, const BoundingBox& target,
                       const DeltaWeights& weights) {
  ValidateBox(anchor);
  ValidateBox(target);
  const double aw = anchor.Width(), ah = anchor.Height();
  return {weights.wx * (target.CenterX() - anchor.CenterX()) / aw,
          weights.wy * (target.CenterY() - anchor.CenterY()) / ah,
          weights.ww * std::log(target.Width() / aw), weights.wh * std::log(target.Height() / ah)};
}

BoundingBox DecodeDeltas(const BoundingBox& anchor, const BoxDeltas& deltas,
                         const DeltaWeights& weights, std::optional<ClipWindow> clip,
                         double max_log_scale) {
  const double aw = anchor.Width(), ah = anchor.Height();
  const double cx = anchor.CenterX() + deltas.dx / weights.wx * aw;
  const double cy = anchor.CenterY() + deltas.dy / weights.wy * ah;
  const double w = aw * std::exp(std::min(deltas.dw / weights.ww, max_log_scale));
  const double h = ah * std::exp(std::min(deltas.dh / weights.wh, max_log_scale));
  BoundingBox out{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  if (clip) out = ClipBox(out, clip->width, clip->height);
  return out;
}

std::vector<int> Nms(std::span<const ScoredBox> boxes, double iou_threshold) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return boxes[a].score > boxes[b].score; });
  std::vector<int> kept;
  std::vector<char> suppressed(boxes.size(), 0);
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const int i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      const int j = order[oj];
      if (!suppressed[j] && IouUnchecked(boxes[i].box, boxes[j].box) >= iou_threshold) {
        suppressed[j] = 1;
      }
    }
  }
  return kept;
}

}  // namespace mtdet

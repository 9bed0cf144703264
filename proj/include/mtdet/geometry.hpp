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
#ifndef MTDET_GEOMETRY_HPP_
#define MTDET_GEOMETRY_HPP_

#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace mtdet {

// Axis-aligned box in continuous corner form. Width is x2 - x1 (no +1).
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double Width() const { return x2 - x1; }
  double Height() const { return y2 - y1; }
  double Area() const { return Width() * Height(); }
  double CenterX() const { return 0.5 * (x1 + x2); }
  double CenterY() const { return 0.5 * (y1 + y2); }
  bool IsValid() const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Throws a validation error unless the box has finite coordinates and
// strictly positive width and height.
void ValidateBox(const BoundingBox& box);

double Iou(const BoundingBox& a, const BoundingBox& b);
// Same formula without validation; 0 when the union is empty.
double IouUnchecked(const BoundingBox& a, const BoundingBox& b);
double IntersectionArea(const BoundingBox& a, const BoundingBox& b);

BoundingBox ClipBox(const BoundingBox& box, double width, double height);

struct AnchorShape {
  double width = 0;
  double height = 0;
};

// One shape per ratio (height / width), each with area size^2.
std::vector<AnchorShape> MakeAnchorShapes(double size, std::span<const double> ratios);

// One anchor size and one stride per pyramid level; every level uses all ratios.
struct AnchorGrid {
  std::vector<double> ratios;
  std::vector<double> sizes;
  std::vector<int> strides;

  int num_levels() const { return static_cast<int>(sizes.size()); }
  int anchors_per_location() const { return static_cast<int>(ratios.size()); }
  void Validate() const;
};

struct FeatureDims {
  int height = 0;
  int width = 0;
};

// Anchors ordered by (level, row, col, ratio), centered at
// ((col + 0.5) * stride, (row + 0.5) * stride).
std::vector<BoundingBox> TileAnchors(const AnchorGrid& grid, std::span<const FeatureDims> dims);

struct BoxDeltas {
  double dx = 0, dy = 0, dw = 0, dh = 0;
};

// Scale factors applied to the encoded deltas (region heads conventionally
// use 10, 10, 5, 5; proposals use unit weights).
struct DeltaWeights {
  double wx = 1, wy = 1, ww = 1, wh = 1;
};

struct ClipWindow {
  double width = 0;
  double height = 0;
};

BoxDeltas EncodeDeltas(const BoundingBox& anchor, const BoundingBox& target,
                       const DeltaWeights& weights = {});

// Inverse of EncodeDeltas. `max_log_scale` bounds dw and dh before
// exponentiation; the result is clipped when a window is given and may be
// degenerate after clipping.
BoundingBox DecodeDeltas(const BoundingBox& anchor, const BoxDeltas& deltas,
                         const DeltaWeights& weights = {},
                         std::optional<ClipWindow> clip = std::nullopt,
                         double max_log_scale = std::numeric_limits<double>::infinity());

struct ScoredBox {
  BoundingBox box;
  double score = 0;
};

// Greedy suppression. Returns kept indices ordered by descending score, equal
// scores by ascending input index. A box is suppressed when its IoU with an
// already kept box is >= iou_threshold.
std::vector<int> Nms(std::span<const ScoredBox> boxes, double iou_threshold);

}  // namespace mtdet

#endif  // MTDET_GEOMETRY_HPP_

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
#ifndef MTDET_RENDER_HPP_
#define MTDET_RENDER_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "mtdet/eval.hpp"
#include "mtdet/image.hpp"

namespace mtdet {

struct RenderOptions {
  double min_confidence = 0.5;
  int line_width = 2;
  int font_scale = 2;
};

using Rgb = std::array<uint8_t, 3>;

// Stable per-label color.
Rgb LabelColor(const std::string& label);

void DrawRect(RgbImage& image, const BoundingBox& box, const Rgb& color, int line_width);
void FillRect(RgbImage& image, int x0, int y0, int x1, int y1, const Rgb& color);
// 5x7 glyphs, letters rendered upper-case; unknown characters print as '?'.
void DrawText(RgbImage& image, int x, int y, const std::string& text, const Rgb& color, int scale);
int TextWidth(const std::string& text, int scale);

// Boxes with "<genus> <confidence>" labels at their top-left corners.
// Detection coordinates are in the image's own pixel frame.
RgbImage RenderDetections(const RgbImage& image, std::span<const EvalDetection> detections,
                          const RenderOptions& options = {});

}  // namespace mtdet

#endif  // MTDET_RENDER_HPP_

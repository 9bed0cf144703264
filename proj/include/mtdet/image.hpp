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
#ifndef MTDET_IMAGE_HPP_
#define MTDET_IMAGE_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace mtdet {

// 8-bit RGB, interleaved, row-major. The at-rest pixel format.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, 0) {}

  uint8_t* at(int x, int y) { return &pixels[(static_cast<size_t>(y) * width + x) * 3]; }
  const uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<size_t>(y) * width + x) * 3];
  }
};

// Three planar float channels (CHW).
struct PlanarImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  PlanarImage() = default;
  PlanarImage(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.f) {}

  size_t plane() const { return static_cast<size_t>(width) * height; }
  float* channel(int c) { return data.data() + c * plane(); }
  const float* channel(int c) const { return data.data() + c * plane(); }
  float& at(int c, int x, int y) { return data[c * plane() + static_cast<size_t>(y) * width + x]; }
  float at(int c, int x, int y) const {
    return data[c * plane() + static_cast<size_t>(y) * width + x];
  }
};

RgbImage ReadPng(const std::string& path);
void WritePng(const std::string& path, const RgbImage& image);

PlanarImage ToPlanar(const RgbImage& image);
// Clamps and rounds to 8 bits.
RgbImage ToRgb(const PlanarImage& image);

// Bilinear resampling with half-pixel centers. Same-size input is returned
// unchanged.
PlanarImage ResizeBilinear(const PlanarImage& image, int width, int height);

}  // namespace mtdet

#endif  // MTDET_IMAGE_HPP_

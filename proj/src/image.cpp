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
#include "mtdet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "mtdet/errors.hpp"

namespace mtdet {
namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

RgbImage ReadPng(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) Fail(ErrorKind::kIngestion, "cannot open image '" + path + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    Fail(ErrorKind::kIngestion, "'" + path + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    Fail(ErrorKind::kIngestion, "libpng initialization failed");
  }
  RgbImage image;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    Fail(ErrorKind::kIngestion, "corrupt PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  image = RgbImage(static_cast<int>(w), static_cast<int>(h));
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = image.at(0, static_cast<int>(y));
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void WritePng(const std::string& path, const RgbImage& image) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) Fail(ErrorKind::kIo, "cannot write '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    Fail(ErrorKind::kIo, "libpng initialization failed");
  }
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    Fail(ErrorKind::kIo, "failed writing PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.at(0, y));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

PlanarImage ToPlanar(const RgbImage& image) {
  PlanarImage out(image.width, image.height);
  const size_t n = out.plane();
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) out.data[c * n + i] = image.pixels[i * 3 + c];
  }
  return out;
}

RgbImage ToRgb(const PlanarImage& image) {
  RgbImage out(image.width, image.height);
  const size_t n = image.plane();
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(image.data[c * n + i], 0.f, 255.f);
      out.pixels[i * 3 + c] = static_cast<uint8_t>(std::lround(v));
    }
  }
  return out;
}

PlanarImage ResizeBilinear(const PlanarImage& image, int width, int height) {
  if (width == image.width && height == image.height) return image;
  PlanarImage out(width, height);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  std::vector<int> x0(width), x1(width);
  std::vector<float> fx(width);
  for (int x = 0; x < width; ++x) {
    const double src = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
    x0[x] = static_cast<int>(src);
    x1[x] = std::min(x0[x] + 1, image.width - 1);
    fx[x] = static_cast<float>(src - x0[x]);
  }
  for (int c = 0; c < 3; ++c) {
    const float* in = image.channel(c);
    float* dst = out.channel(c);
    for (int y = 0; y < height; ++y) {
      const double src = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
      const int y0 = static_cast<int>(src);
      const int y1 = std::min(y0 + 1, image.height - 1);
      const float fy = static_cast<float>(src - y0);
      const float* r0 = in + static_cast<size_t>(y0) * image.width;
      const float* r1 = in + static_cast<size_t>(y1) * image.width;
      float* row = dst + static_cast<size_t>(y) * width;
      for (int x = 0; x < width; ++x) {
        const float top = r0[x0[x]] + (r0[x1[x]] - r0[x0[x]]) * fx[x];
        const float bot = r1[x0[x]] + (r1[x1[x]] - r1[x0[x]]) * fx[x];
        row[x] = top + (bot - top) * fy;
      }
    }
  }
  return out;
}

}  // namespace mtdet

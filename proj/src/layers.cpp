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
#include "mtdet/layers.hpp"

#include <algorithm>
#include <cmath>

#include "mtdet/errors.hpp"
#include "mtdet/kernels.hpp"
#include "mtdet/rng.hpp"

namespace mtdet {

Conv2d::Conv2d(ParamStore& store, const std::string& name, const ConvSpec& spec) : spec_(spec) {
  if (spec.in_channels <= 0 || spec.out_channels <= 0 || spec.kernel <= 0 || spec.stride <= 0 ||
      spec.pad < 0) {
    Fail(ErrorKind::kConfiguration, "invalid convolution spec for '" + name + "'");
  }
  weight_ = store.Add(name + ".weight",
                      {spec.out_channels, spec.in_channels * spec.kernel * spec.kernel});
  bias_ = store.Add(name + ".bias", {spec.out_channels});
}

FeatureDims Conv2d::OutputDims(int height, int width) const {
  return {(height + 2 * spec_.pad - spec_.kernel) / spec_.stride + 1,
          (width + 2 * spec_.pad - spec_.kernel) / spec_.stride + 1};
}

namespace {

bool IsPointwise(const ConvSpec& s) { return s.kernel == 1 && s.stride == 1 && s.pad == 0; }

}  // namespace

void Im2Col(const float* x, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, float* col) {
  const size_t plane = static_cast<size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const float* xc = x + static_cast<size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        float* dst = col + (static_cast<size_t>(c) * kernel * kernel + ky * kernel + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          float* row = dst + static_cast<size_t>(oy) * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(row, row + out_w, 0.f);
            continue;
          }
          const float* src = xc + static_cast<size_t>(iy) * width;
          if (stride == 1) {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox - pad + kx;
              row[ox] = (ix >= 0 && ix < width) ? src[ix] : 0.f;
            }
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kx;
              row[ox] = (ix >= 0 && ix < width) ? src[ix] : 0.f;
            }
          }
        }
      }
    }
  }
}

void Col2Im(const float* col, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, float* dx) {
  const size_t plane = static_cast<size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    float* xc = dx + static_cast<size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const float* src =
            col + (static_cast<size_t>(c) * kernel * kernel + ky * kernel + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          float* row = xc + static_cast<size_t>(iy) * width;
          const float* s = src + static_cast<size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < width) row[ix] += s[ox];
          }
        }
      }
    }
  }
}

Tensor Conv2d::Forward(const Tensor& x) const {
  if (x.shape.size() != 3 || x.dim(0) != spec_.in_channels) {
    Fail(ErrorKind::kConfiguration, "conv input " + ShapeString(x.shape) + " does not match " +
                                        std::to_string(spec_.in_channels) + " channels");
  }
  const int h = x.dim(1), w = x.dim(2);
  const FeatureDims od = OutputDims(h, w);
  const int k = spec_.in_channels * spec_.kernel * spec_.kernel;
  const int n = od.height * od.width;
  Tensor y({spec_.out_channels, od.height, od.width});
  const auto& kt = kernels::Active();
  const float* col = x.ptr();
  std::vector<float> buf;
  if (!IsPointwise(spec_)) {
    buf.resize(static_cast<size_t>(k) * n);
    Im2Col(x.ptr(), spec_.in_channels, h, w, spec_.kernel, spec_.stride, spec_.pad, od.height,
           od.width, buf.data());
    col = buf.data();
  }
  for (int o = 0; o < spec_.out_channels; ++o) {
    std::fill_n(y.ptr() + static_cast<size_t>(o) * n, n, bias_->value.data[o]);
  }
  kt.gemm(false, false, spec_.out_channels, n, k, 1.f, weight_->value.ptr(), k, col, n, 1.f,
          y.ptr(), n);
  if (spec_.relu) kt.relu(y.size(), y.ptr());
  return y;
}

void Conv2d::Backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor* dx) const {
  const auto& kt = kernels::Active();
  if (spec_.relu) kt.relu_backward(dy.size(), y.ptr(), dy.ptr());
  const int h = x.dim(1), w = x.dim(2);
  const int oh = y.dim(1), ow = y.dim(2);
  const int k = spec_.in_channels * spec_.kernel * spec_.kernel;
  const int n = oh * ow;
  for (int o = 0; o < spec_.out_channels; ++o) {
    const float* row = dy.ptr() + static_cast<size_t>(o) * n;
    double s = 0;
    for (int i = 0; i < n; ++i) s += row[i];
    bias_->grad.data[o] += static_cast<float>(s);
  }
  const float* col = x.ptr();
  std::vector<float> buf;
  if (!IsPointwise(spec_)) {
    buf.resize(static_cast<size_t>(k) * n);
    Im2Col(x.ptr(), spec_.in_channels, h, w, spec_.kernel, spec_.stride, spec_.pad, oh, ow,
           buf.data());
    col = buf.data();
  }
  kt.gemm(false, true, spec_.out_channels, k, n, 1.f, dy.ptr(), n, col, n, 1.f, weight_->grad.ptr(),
          k);
  if (!dx) return;
  if (IsPointwise(spec_)) {
    kt.gemm(true, false, k, n, spec_.out_channels, 1.f, weight_->value.ptr(), k, dy.ptr(), n, 1.f,
            dx->ptr(), n);
    return;
  }
  kt.gemm(true, false, k, n, spec_.out_channels, 1.f, weight_->value.ptr(), k, dy.ptr(), n, 0.f,
          buf.data(), n);
  Col2Im(buf.data(), spec_.in_channels, h, w, spec_.kernel, spec_.stride, spec_.pad, oh, ow,
         dx->ptr());
}

Linear::Linear(ParamStore& store, const std::string& name, int in_features, int out_features,
               bool relu)
    : in_(in_features), out_(out_features), relu_(relu) {
  if (in_features <= 0 || out_features <= 0) {
    Fail(ErrorKind::kConfiguration, "invalid linear layer '" + name + "'");
  }
  weight_ = store.Add(name + ".weight", {out_features, in_features});
  bias_ = store.Add(name + ".bias", {out_features});
}

Tensor Linear::Forward(const Tensor& x) const {
  if (x.shape.size() != 2 || x.dim(1) != in_) {
    Fail(ErrorKind::kConfiguration, "linear input " + ShapeString(x.shape) + " does not match " +
                                        std::to_string(in_) + " features");
  }
  const int r = x.dim(0);
  Tensor y({r, out_});
  for (int i = 0; i < r; ++i) {
    std::copy(bias_->value.data.begin(), bias_->value.data.end(),
              y.data.begin() + static_cast<size_t>(i) * out_);
  }
  const auto& kt = kernels::Active();
  if (r > 0) {
    kt.gemm(false, true, r, out_, in_, 1.f, x.ptr(), in_, weight_->value.ptr(), in_, 1.f, y.ptr(),
            out_);
  }
  if (relu_) kt.relu(y.size(), y.ptr());
  return y;
}

void Linear::Backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor* dx) const {
  const auto& kt = kernels::Active();
  if (relu_) kt.relu_backward(dy.size(), y.ptr(), dy.ptr());
  const int r = x.dim(0);
  if (r == 0) return;
  for (int o = 0; o < out_; ++o) {
    double s = 0;
    for (int i = 0; i < r; ++i) s += dy.data[static_cast<size_t>(i) * out_ + o];
    bias_->grad.data[o] += static_cast<float>(s);
  }
  kt.gemm(true, false, out_, in_, r, 1.f, dy.ptr(), out_, x.ptr(), in_, 1.f, weight_->grad.ptr(),
          in_);
  if (dx) {
    kt.gemm(false, false, r, in_, out_, 1.f, dy.ptr(), out_, weight_->value.ptr(), in_, 1.f,
            dx->ptr(), in_);
  }
}

Tensor UpsampleAdd(const Tensor& lateral, const Tensor& coarse) {
  const int c = lateral.dim(0), h = lateral.dim(1), w = lateral.dim(2);
  if (coarse.dim(0) != c || coarse.dim(1) != (h + 1) / 2 || coarse.dim(2) != (w + 1) / 2) {
    Fail(ErrorKind::kConfiguration, "pyramid levels " + ShapeString(lateral.shape) + " and " +
                                        ShapeString(coarse.shape) + " are not 2x apart");
  }
  Tensor out = lateral;
  const int ch = coarse.dim(1), cw = coarse.dim(2);
  for (int k = 0; k < c; ++k) {
    for (int y = 0; y < h; ++y) {
      const float* src = coarse.ptr() + (static_cast<size_t>(k) * ch + y / 2) * cw;
      float* dst = out.ptr() + (static_cast<size_t>(k) * h + y) * w;
      for (int x = 0; x < w; ++x) dst[x] += src[x / 2];
    }
  }
  return out;
}

void UpsampleAddBackward(const Tensor& d_out, Tensor& d_coarse) {
  const int c = d_out.dim(0), h = d_out.dim(1), w = d_out.dim(2);
  const int ch = d_coarse.dim(1), cw = d_coarse.dim(2);
  for (int k = 0; k < c; ++k) {
    for (int y = 0; y < h; ++y) {
      const float* src = d_out.ptr() + (static_cast<size_t>(k) * h + y) * w;
      float* dst = d_coarse.ptr() + (static_cast<size_t>(k) * ch + y / 2) * cw;
      for (int x = 0; x < w; ++x) dst[x / 2] += src[x];
    }
  }
}

namespace {

struct BilinearTap {
  int offset[4];
  float weight[4];
};

// Sample taps for one box: S*S bins, each with grid*grid taps.
void RoiTaps(const BoundingBox& box, double scale, int height, int width, const RoiAlignSpec& spec,
             std::vector<BilinearTap>& taps) {
  const int s = spec.output_size, g = spec.sampling_ratio;
  taps.assign(static_cast<size_t>(s) * s * g * g, BilinearTap{{0, 0, 0, 0}, {0, 0, 0, 0}});
  const double x1 = box.x1 * scale - 0.5, y1 = box.y1 * scale - 0.5;
  const double bin_w = (box.x2 - box.x1) * scale / s;
  const double bin_h = (box.y2 - box.y1) * scale / s;
  size_t t = 0;
  for (int ph = 0; ph < s; ++ph) {
    for (int pw = 0; pw < s; ++pw) {
      for (int iy = 0; iy < g; ++iy) {
        for (int ix = 0; ix < g; ++ix, ++t) {
          double y = y1 + ph * bin_h + (iy + 0.5) * bin_h / g;
          double x = x1 + pw * bin_w + (ix + 0.5) * bin_w / g;
          if (y < -1.0 || y > height || x < -1.0 || x > width) continue;
          y = std::max(y, 0.0);
          x = std::max(x, 0.0);
          int y_low = static_cast<int>(y), x_low = static_cast<int>(x), y_high, x_high;
          if (y_low >= height - 1) {
            y_high = y_low = height - 1;
            y = y_low;
          } else {
            y_high = y_low + 1;
          }
          if (x_low >= width - 1) {
            x_high = x_low = width - 1;
            x = x_low;
          } else {
            x_high = x_low + 1;
          }
          const double ly = y - y_low, lx = x - x_low, hy = 1 - ly, hx = 1 - lx;
          auto& tap = taps[t];
          tap.offset[0] = y_low * width + x_low;
          tap.offset[1] = y_low * width + x_high;
          tap.offset[2] = y_high * width + x_low;
          tap.offset[3] = y_high * width + x_high;
          tap.weight[0] = static_cast<float>(hy * hx);
          tap.weight[1] = static_cast<float>(hy * lx);
          tap.weight[2] = static_cast<float>(ly * hx);
          tap.weight[3] = static_cast<float>(ly * lx);
        }
      }
    }
  }
}

}  // namespace

void RoiAlignForward(const Tensor& feature, double spatial_scale,
                     std::span<const BoundingBox> boxes, const RoiAlignSpec& spec, Tensor& out,
                     std::span<const int> rows) {
  const int c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  const int s = spec.output_size, g = spec.sampling_ratio;
  const int bins = s * s, per_bin = g * g;
  const float inv = 1.f / static_cast<float>(per_bin);
  const size_t plane = static_cast<size_t>(h) * w;
  std::vector<BilinearTap> taps;
  for (size_t r = 0; r < boxes.size(); ++r) {
    RoiTaps(boxes[r], spatial_scale, h, w, spec, taps);
    float* dst = out.ptr() + static_cast<size_t>(rows[r]) * c * bins;
    for (int k = 0; k < c; ++k) {
      const float* f = feature.ptr() + k * plane;
      for (int b = 0; b < bins; ++b) {
        float acc = 0.f;
        for (int t = 0; t < per_bin; ++t) {
          const auto& tap = taps[static_cast<size_t>(b) * per_bin + t];
          acc += tap.weight[0] * f[tap.offset[0]] + tap.weight[1] * f[tap.offset[1]] +
                 tap.weight[2] * f[tap.offset[2]] + tap.weight[3] * f[tap.offset[3]];
        }
        dst[k * bins + b] = acc * inv;
      }
    }
  }
}

void RoiAlignBackward(const Tensor& d_out, double spatial_scale,
                      std::span<const BoundingBox> boxes, const RoiAlignSpec& spec,
                      std::span<const int> rows, Tensor& d_feature) {
  const int c = d_feature.dim(0), h = d_feature.dim(1), w = d_feature.dim(2);
  const int s = spec.output_size, g = spec.sampling_ratio;
  const int bins = s * s, per_bin = g * g;
  const float inv = 1.f / static_cast<float>(per_bin);
  const size_t plane = static_cast<size_t>(h) * w;
  std::vector<BilinearTap> taps;
  for (size_t r = 0; r < boxes.size(); ++r) {
    RoiTaps(boxes[r], spatial_scale, h, w, spec, taps);
    const float* src = d_out.ptr() + static_cast<size_t>(rows[r]) * c * bins;
    for (int k = 0; k < c; ++k) {
      float* f = d_feature.ptr() + k * plane;
      for (int b = 0; b < bins; ++b) {
        const float gv = src[k * bins + b] * inv;
        if (gv == 0.f) continue;
        for (int t = 0; t < per_bin; ++t) {
          const auto& tap = taps[static_cast<size_t>(b) * per_bin + t];
          for (int q = 0; q < 4; ++q) f[tap.offset[q]] += gv * tap.weight[q];
        }
      }
    }
  }
}

void InitNormal(Param& p, double stddev, uint64_t seed) {
  Rng rng(MixSeed(seed, HashString(p.name)));
  for (auto& v : p.value.data) v = static_cast<float>(rng.Normal() * stddev);
}

void InitConstant(Param& p, float value) {
  std::fill(p.value.data.begin(), p.value.data.end(), value);
}

}  // namespace mtdet

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
#ifndef MTDET_LAYERS_HPP_
#define MTDET_LAYERS_HPP_

#include <span>
#include <vector>

#include "mtdet/geometry.hpp"
#include "mtdet/tensor.hpp"

namespace mtdet {

// Layers are stateless apart from their parameters: callers keep the
// activations and pass them back to Backward. Backward accumulates into
// parameter gradients and into `dx` (when non-null), never overwrites.

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  bool relu = true;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, const ConvSpec& spec);

  const ConvSpec& spec() const { return spec_; }
  Param* weight() const { return weight_; }
  Param* bias() const { return bias_; }
  FeatureDims OutputDims(int height, int width) const;

  // x: {C, H, W}
  Tensor Forward(const Tensor& x) const;
  // `dy` is consumed (ReLU masking is applied in place).
  void Backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor* dx) const;

 private:
  ConvSpec spec_;
  Param* weight_ = nullptr;  // {out, in * k * k}
  Param* bias_ = nullptr;    // {out}
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in_features, int out_features,
         bool relu);

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Param* weight() const { return weight_; }
  Param* bias() const { return bias_; }

  // x: {R, in} -> {R, out}
  Tensor Forward(const Tensor& x) const;
  void Backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor* dx) const;

 private:
  int in_ = 0, out_ = 0;
  bool relu_ = false;
  Param* weight_ = nullptr;  // {out, in}
  Param* bias_ = nullptr;
};

// im2col for a {C, H, W} input; result is {C * k * k, Ho * Wo}.
void Im2Col(const float* x, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, float* col);
// Adjoint of Im2Col, accumulating into dx.
void Col2Im(const float* col, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, float* dx);

// out = lateral + nearest_upsample_2x(coarse), shapes {C, 2H, 2W} and {C, H, W}.
Tensor UpsampleAdd(const Tensor& lateral, const Tensor& coarse);
// d_coarse += 2x2 block sums of d_out.
void UpsampleAddBackward(const Tensor& d_out, Tensor& d_coarse);

struct RoiAlignSpec {
  int output_size = 7;
  int sampling_ratio = 2;
};

// Aligned ROI pooling (half-pixel offset) of boxes given in image pixels.
// feature: {C, H, W}; returns {R, C * S * S} rows written at `row_offset`
// into `out` (shape {total_rows, C * S * S}).
void RoiAlignForward(const Tensor& feature, double spatial_scale, std::span<const BoundingBox> boxes,
                     const RoiAlignSpec& spec, Tensor& out, std::span<const int> rows);
void RoiAlignBackward(const Tensor& d_out, double spatial_scale,
                      std::span<const BoundingBox> boxes, const RoiAlignSpec& spec,
                      std::span<const int> rows, Tensor& d_feature);

// Fills a parameter with N(0, stddev^2) from a generator keyed on
// (seed, parameter name), so initial values do not depend on which other
// parameters exist.
void InitNormal(Param& p, double stddev, uint64_t seed);
void InitConstant(Param& p, float value);

}  // namespace mtdet

#endif  // MTDET_LAYERS_HPP_

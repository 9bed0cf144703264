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
#include <cmath>

#include "mtdet/kernels.hpp"

namespace mtdet::kernels {
namespace {

void GemmScalar(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<size_t>(i) * ldc;
    if (beta == 0.f) {
      for (int j = 0; j < n; ++j) crow[j] = 0.f;
    } else if (beta != 1.f) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (int p = 0; p < k; ++p) {
      const float av = alpha * (trans_a ? a[static_cast<size_t>(p) * lda + i]
                                        : a[static_cast<size_t>(i) * lda + p]);
      if (av == 0.f) continue;
      if (!trans_b) {
        const float* brow = b + static_cast<size_t>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (int j = 0; j < n; ++j) crow[j] += av * b[static_cast<size_t>(j) * ldb + p];
      }
    }
  }
}

void AxpyScalar(size_t n, float a, const float* x, float* y) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

float DotScalar(size_t n, const float* x, const float* y) {
  float s = 0.f;
  for (size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void ScaleScalar(size_t n, float a, float* x) {
  for (size_t i = 0; i < n; ++i) x[i] *= a;
}

void ReluScalar(size_t n, float* x) {
  for (size_t i = 0; i < n; ++i) x[i] = x[i] > 0.f ? x[i] : 0.f;
}

void ReluBackwardScalar(size_t n, const float* y, float* dy) {
  for (size_t i = 0; i < n; ++i) {
    if (!(y[i] > 0.f)) dy[i] = 0.f;
  }
}

void SgdMomentumScalar(size_t n, float lr, float momentum, const float* grad, float* velocity,
                       float* param) {
  for (size_t i = 0; i < n; ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
}

double SumSquaresScalar(size_t n, const float* x) {
  double s = 0;
  for (size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
  return s;
}

}  // namespace

const KernelTable& ScalarKernels() {
  static const KernelTable table{Isa::kScalar,     GemmScalar,        AxpyScalar,
                                 DotScalar,        ScaleScalar,       ReluScalar,
                                 ReluBackwardScalar, SgdMomentumScalar, SumSquaresScalar};
  return table;
}

}  // namespace mtdet::kernels

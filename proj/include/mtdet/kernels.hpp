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
#ifndef MTDET_KERNELS_HPP_
#define MTDET_KERNELS_HPP_

#include <cstddef>

// Data-parallel inner loops. Each kernel has a portable scalar reference and,
// where the CPU supports it, an AVX2+FMA variant; Active() picks one at
// startup. Variants agree to floating-point tolerance (FMA contraction and
// blocked accumulation change rounding), never bit-for-bit.
namespace mtdet::kernels {

enum class Isa { kScalar, kAvx2 };

const char* IsaName(Isa isa);

struct KernelTable {
  Isa isa;
  // Row-major C = alpha * op(A) * op(B) + beta * C, op(X) = X or X^T.
  // op(A) is M x K, op(B) is K x N. With beta == 0, C is not read.
  void (*gemm)(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
               int lda, const float* b, int ldb, float beta, float* c, int ldc);
  // y += a * x
  void (*axpy)(size_t n, float a, const float* x, float* y);
  float (*dot)(size_t n, const float* x, const float* y);
  void (*scale)(size_t n, float a, float* x);
  void (*relu)(size_t n, float* x);
  // dy *= (y > 0)
  void (*relu_backward)(size_t n, const float* y, float* dy);
  // velocity = momentum * velocity + grad; param -= lr * velocity
  void (*sgd_momentum)(size_t n, float lr, float momentum, const float* grad, float* velocity,
                       float* param);
  double (*sum_squares)(size_t n, const float* x);
};

const KernelTable& ScalarKernels();
// Null when the binary was built without AVX2 support compiled in.
const KernelTable* Avx2Kernels();
bool CpuSupportsAvx2();

// Selected once: AVX2 when supported unless MTDET_ISA=scalar.
const KernelTable& Active();
// Test hook; returns the previous selection.
Isa SetActive(Isa isa);

// Per-thread scratch used by the packed GEMM.
float* GemmScratchA(size_t n);
float* GemmScratchB(size_t n);

}  // namespace mtdet::kernels

#endif  // MTDET_KERNELS_HPP_

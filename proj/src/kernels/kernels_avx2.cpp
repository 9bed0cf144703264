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
#include "mtdet/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define MTDET_HAVE_AVX2_TU 1
#define MTDET_AVX2 __attribute__((target("avx2,fma")))
#endif

namespace mtdet::kernels {

#ifdef MTDET_HAVE_AVX2_TU
namespace {

constexpr int kMr = 6;
constexpr int kNr = 16;
constexpr int kKc = 256;
constexpr int kMc = 96;
constexpr int kNc = 2048;

// Packs op(A)[i0:i0+mc, p0:p0+kc] into kMr-row strips, zero padded.
MTDET_AVX2 void PackA(bool trans, const float* a, int lda, int i0, int p0, int mc, int kc,
                      float* dst) {
  for (int is = 0; is < mc; is += kMr) {
    const int rows = mc - is < kMr ? mc - is : kMr;
    for (int p = 0; p < kc; ++p) {
      for (int r = 0; r < kMr; ++r) {
        float v = 0.f;
        if (r < rows) {
          const size_t i = static_cast<size_t>(i0 + is + r), q = static_cast<size_t>(p0 + p);
          v = trans ? a[q * lda + i] : a[i * lda + q];
        }
        *dst++ = v;
      }
    }
  }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into kNr-column strips, zero padded.
MTDET_AVX2 void PackB(bool trans, const float* b, int ldb, int p0, int j0, int kc, int nc,
                      float* dst) {
  for (int js = 0; js < nc; js += kNr) {
    const int cols = nc - js < kNr ? nc - js : kNr;
    for (int p = 0; p < kc; ++p) {
      const size_t q = static_cast<size_t>(p0 + p);
      if (!trans && cols == kNr) {
        const float* src = b + q * ldb + j0 + js;
        _mm256_storeu_ps(dst, _mm256_loadu_ps(src));
        _mm256_storeu_ps(dst + 8, _mm256_loadu_ps(src + 8));
        dst += kNr;
        continue;
      }
      for (int c = 0; c < kNr; ++c) {
        float v = 0.f;
        if (c < cols) {
          const size_t j = static_cast<size_t>(j0 + js + c);
          v = trans ? b[j * ldb + q] : b[q * ldb + j];
        }
        *dst++ = v;
      }
    }
  }
}

// C[0:rows, 0:cols] = alpha * Ap * Bp + beta * C.
MTDET_AVX2 void MicroKernel(int kc, const float* ap, const float* bp, float alpha, float beta,
                            float* c, int ldc, int rows, int cols) {
  __m256 acc[kMr][2];
#pragma GCC unroll 6
  for (int r = 0; r < kMr; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
#pragma GCC unroll 6
    for (int r = 0; r < kMr; ++r) {
      const __m256 av = _mm256_broadcast_ss(ap + r);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
    ap += kMr;
    bp += kNr;
  }
  const __m256 va = _mm256_set1_ps(alpha);
  if (rows == kMr && cols == kNr) {
    const __m256 vb = _mm256_set1_ps(beta);
#pragma GCC unroll 6
    for (int r = 0; r < kMr; ++r) {
      float* crow = c + static_cast<size_t>(r) * ldc;
      __m256 lo = _mm256_mul_ps(va, acc[r][0]);
      __m256 hi = _mm256_mul_ps(va, acc[r][1]);
      if (beta != 0.f) {
        lo = _mm256_fmadd_ps(vb, _mm256_loadu_ps(crow), lo);
        hi = _mm256_fmadd_ps(vb, _mm256_loadu_ps(crow + 8), hi);
      }
      _mm256_storeu_ps(crow, lo);
      _mm256_storeu_ps(crow + 8, hi);
    }
    return;
  }
  alignas(32) float tile[kMr * kNr];
  for (int r = 0; r < kMr; ++r) {
    _mm256_store_ps(tile + r * kNr, _mm256_mul_ps(va, acc[r][0]));
    _mm256_store_ps(tile + r * kNr + 8, _mm256_mul_ps(va, acc[r][1]));
  }
  for (int r = 0; r < rows; ++r) {
    float* crow = c + static_cast<size_t>(r) * ldc;
    for (int j = 0; j < cols; ++j) {
      crow[j] = beta == 0.f ? tile[r * kNr + j] : tile[r * kNr + j] + beta * crow[j];
    }
  }
}

MTDET_AVX2 void GemmAvx2(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                         const float* a, int lda, const float* b, int ldb, float beta, float* c,
                         int ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        float& v = c[static_cast<size_t>(i) * ldc + j];
        v = beta == 0.f ? 0.f : beta * v;
      }
    }
    return;
  }
  float* bpack = GemmScratchB(static_cast<size_t>(kKc) * (kNc + kNr));
  float* apack = GemmScratchA(static_cast<size_t>(kKc) * (kMc + kMr));
  for (int jc = 0; jc < n; jc += kNc) {
    const int nc = n - jc < kNc ? n - jc : kNc;
    for (int pc = 0; pc < k; pc += kKc) {
      const int kc = k - pc < kKc ? k - pc : kKc;
      const float beta_eff = pc == 0 ? beta : 1.f;
      PackB(trans_b, b, ldb, pc, jc, kc, nc, bpack);
      for (int ic = 0; ic < m; ic += kMc) {
        const int mc = m - ic < kMc ? m - ic : kMc;
        PackA(trans_a, a, lda, ic, pc, mc, kc, apack);
        for (int jr = 0; jr < nc; jr += kNr) {
          const int cols = nc - jr < kNr ? nc - jr : kNr;
          const float* bp = bpack + static_cast<size_t>(jr / kNr) * kc * kNr;
          for (int ir = 0; ir < mc; ir += kMr) {
            const int rows = mc - ir < kMr ? mc - ir : kMr;
            const float* ap = apack + static_cast<size_t>(ir / kMr) * kc * kMr;
            float* cp = c + static_cast<size_t>(ic + ir) * ldc + jc + jr;
            MicroKernel(kc, ap, bp, alpha, beta_eff, cp, ldc, rows, cols);
          }
        }
      }
    }
  }
}

MTDET_AVX2 void AxpyAvx2(size_t n, float a, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

MTDET_AVX2 float HorizontalSum(__m256 v) {
  const __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0x55));
  return _mm_cvtss_f32(s);
}

MTDET_AVX2 float DotAvx2(size_t n, const float* x, const float* y) {
  __m256 acc = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
  float s = HorizontalSum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

MTDET_AVX2 void ScaleAvx2(size_t n, float a, float* x) {
  const __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

MTDET_AVX2 void ReluAvx2(size_t n, float* x) {
  const __m256 zero = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) x[i] = x[i] > 0.f ? x[i] : 0.f;
}

MTDET_AVX2 void ReluBackwardAvx2(size_t n, const float* y, float* dy) {
  const __m256 zero = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dy + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) {
    if (!(y[i] > 0.f)) dy[i] = 0.f;
  }
}

MTDET_AVX2 void SgdMomentumAvx2(size_t n, float lr, float momentum, const float* grad,
                                float* velocity, float* param) {
  const __m256 vm = _mm256_set1_ps(momentum);
  const __m256 vlr = _mm256_set1_ps(lr);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_fmadd_ps(vm, _mm256_loadu_ps(velocity + i), _mm256_loadu_ps(grad + i));
    _mm256_storeu_ps(velocity + i, v);
    _mm256_storeu_ps(param + i, _mm256_fnmadd_ps(vlr, v, _mm256_loadu_ps(param + i)));
  }
  for (; i < n; ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
}

MTDET_AVX2 double SumSquaresAvx2(size_t n, const float* x) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v));
    const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1));
    acc0 = _mm256_fmadd_pd(lo, lo, acc0);
    acc1 = _mm256_fmadd_pd(hi, hi, acc1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
  return s;
}

}  // namespace

const KernelTable* Avx2Kernels() {
  static const KernelTable table{Isa::kAvx2,     GemmAvx2,        AxpyAvx2,
                                 DotAvx2,        ScaleAvx2,       ReluAvx2,
                                 ReluBackwardAvx2, SgdMomentumAvx2, SumSquaresAvx2};
  return &table;
}
#else
const KernelTable* Avx2Kernels() { return nullptr; }
#endif

}  // namespace mtdet::kernels

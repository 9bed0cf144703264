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
#ifndef MTDET_LOSS_HPP_
#define MTDET_LOSS_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mtdet/errors.hpp"

namespace mtdet {

// Scalar-generic so that the same code runs in float for training and in
// double for finite-difference checks.

template <typename T>
T LogSumExp(std::span<const T> logits) {
  T mx = logits[0];
  for (T v : logits) mx = std::max(mx, v);
  T s = 0;
  for (T v : logits) s += std::exp(v - mx);
  return mx + std::log(s);
}

template <typename T>
void Softmax(std::span<const T> logits, std::span<T> out) {
  const T lse = LogSumExp(logits);
  for (size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
}

// -log softmax(logits)[target]. When `grad` is non-empty it receives
// scale * d/dlogits (overwritten).
template <typename T>
T CrossEntropy(std::span<const T> logits, int target, std::span<T> grad = {}, T scale = T(1)) {
  if (logits.empty() || target < 0 || target >= static_cast<int>(logits.size())) {
    Fail(ErrorKind::kValidation, "cross-entropy target index " + std::to_string(target) +
                                     " outside [0, " + std::to_string(logits.size()) + ")");
  }
  const T lse = LogSumExp(logits);
  if (!grad.empty()) {
    for (size_t i = 0; i < logits.size(); ++i) {
      grad[i] = scale * (std::exp(logits[i] - lse) - (static_cast<int>(i) == target ? T(1) : T(0)));
    }
  }
  // Rounding can leave a tiny negative; NaN must still propagate.
  const T v = lse - logits[target];
  return v < T(0) ? T(0) : v;
}

// Binary cross-entropy on a logit, numerically stable for large |x|.
template <typename T>
T BinaryCrossEntropyWithLogit(T x, int label, T* grad = nullptr, T scale = T(1)) {
  const T y = label ? T(1) : T(0);
  if (grad) {
    const T p = x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
    *grad = scale * (p - y);
  }
  return std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
}

// Huber-style smooth L1; beta == 0 is plain L1.
template <typename T>
T SmoothL1(T diff, T beta, T* grad = nullptr, T scale = T(1)) {
  const T a = std::abs(diff);
  if (a < beta) {
    if (grad) *grad = scale * diff / beta;
    return T(0.5) * diff * diff / beta;
  }
  if (grad) *grad = scale * (diff > 0 ? T(1) : (diff < 0 ? T(-1) : T(0)));
  return a - T(0.5) * beta;
}

}  // namespace mtdet

#endif  // MTDET_LOSS_HPP_

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
#include <atomic>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "mtdet/kernels.hpp"

namespace mtdet::kernels {
namespace {

const KernelTable* Select() {
  const char* force = std::getenv("MTDET_ISA");
  if (force && std::strcmp(force, "scalar") == 0) return &ScalarKernels();
  if (CpuSupportsAvx2() && Avx2Kernels()) return Avx2Kernels();
  return &ScalarKernels();
}

std::atomic<const KernelTable*>& Slot() {
  static std::atomic<const KernelTable*> slot{Select()};
  return slot;
}

}  // namespace

const char* IsaName(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

bool CpuSupportsAvx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& Active() { return *Slot().load(std::memory_order_acquire); }

Isa SetActive(Isa isa) {
  const Isa previous = Active().isa;
  const KernelTable* next = &ScalarKernels();
  if (isa == Isa::kAvx2 && CpuSupportsAvx2() && Avx2Kernels()) next = Avx2Kernels();
  Slot().store(next, std::memory_order_release);
  return previous;
}

float* GemmScratchA(size_t n) {
  thread_local std::vector<float> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

float* GemmScratchB(size_t n) {
  thread_local std::vector<float> buf;
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

}  // namespace mtdet::kernels

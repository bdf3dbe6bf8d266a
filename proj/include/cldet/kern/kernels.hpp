/* Copyright 2026 The cldet Authors. All Rights Reserved.

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
#ifndef CLDET_KERN_KERNELS_HPP_
#define CLDET_KERN_KERNELS_HPP_

#include <cstdint>
#include <string>

namespace cldet::kern {

// Data-parallel inner loops behind the tensor ops. Every kernel has a scalar
// reference implementation and may have SIMD variants selected at runtime.
// All variants of a kernel must produce bit-identical results; the contract
// that makes this possible:
//
//   * gemm accumulates each output element as a single fused-multiply-add
//     chain over k in ascending order. The scalar reference uses std::fma,
//     the AVX2 variant uses vfmadd — both are correctly-rounded fused ops,
//     so the chains agree bit-for-bit.
//   * element-wise kernels have no cross-lane reductions, so lane order is
//     irrelevant.
//
// Reductions with data-dependent order (tensor sum/mean) deliberately stay
// scalar in the op layer.
struct Kernels {
  const char* name;

  // c[m,n] = sum_k a[m,k]*b[k,n]  (accumulate=false overwrites c,
  // accumulate=true continues the fma chain from the existing c values).
  // All matrices packed row-major.
  void (*gemm)(const double* a, const double* b, double* c, int64_t m,
               int64_t n, int64_t k, bool accumulate);

  void (*add)(const double* a, const double* b, double* out, int64_t n);
  void (*sub)(const double* a, const double* b, double* out, int64_t n);
  void (*mul)(const double* a, const double* b, double* out, int64_t n);
  void (*scale)(const double* a, double s, double* out, int64_t n);
  void (*relu)(const double* a, double* out, int64_t n);
};

enum class Backend { kScalar, kAvx2 };

const Kernels& scalar_kernels();
bool avx2_available();          // compiled in and supported by this CPU
const Kernels& avx2_kernels();  // valid only if avx2_available()

// Active backend used by the tensor ops. Defaults to the widest available
// variant; CLDET_BACKEND=scalar|avx2 in the environment or set_backend()
// override it.
const Kernels& active();
void set_backend(Backend b);
Backend current_backend();
std::string backend_name();

}  // namespace cldet::kern

#endif  // CLDET_KERN_KERNELS_HPP_

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
#include <cmath>
#include <cstring>

#include "cldet/kern/kernels.hpp"

namespace cldet::kern {
namespace {

// Reference gemm. The i,k,j loop order streams both b and c; each c[i,j]
// still accumulates strictly in ascending k, one fma per term, which is the
// order every SIMD variant must reproduce.
void gemm_scalar(const double* a, const double* b, double* c, int64_t m,
                 int64_t n, int64_t k, bool accumulate) {
  if (!accumulate) {
    std::memset(c, 0, sizeof(double) * static_cast<size_t>(m * n));
  }
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) {
        crow[j] = std::fma(aik, brow[j], crow[j]);
      }
    }
  }
}

void add_scalar(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(const double* a, double s, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void relu_scalar(const double* a, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k = {"scalar",     gemm_scalar, add_scalar, sub_scalar,
                            mul_scalar, scale_scalar, relu_scalar};
  return k;
}

}  // namespace cldet::kern

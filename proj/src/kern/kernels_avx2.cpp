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
// AVX2/FMA variants. Compiled with -mavx2 -mfma on x86_64 only; the dispatch
// layer guards execution behind a runtime CPU check. Every kernel reproduces
// the scalar reference bit-for-bit: per-element fma chains in ascending k for
// gemm, pure lane-parallel arithmetic elsewhere.
#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "cldet/kern/kernels.hpp"

namespace cldet::kern {
namespace {

// mr x 8 tile: 2 column vectors, up to 4 rows of accumulators.
inline void tile8(const double* a, const double* b, double* c, int64_t n,
                  int64_t k, int64_t mr, bool accumulate) {
  __m256d acc[4][2];
  for (int64_t r = 0; r < mr; ++r) {
    if (accumulate) {
      acc[r][0] = _mm256_loadu_pd(c + r * n);
      acc[r][1] = _mm256_loadu_pd(c + r * n + 4);
    } else {
      acc[r][0] = _mm256_setzero_pd();
      acc[r][1] = _mm256_setzero_pd();
    }
  }
  for (int64_t kk = 0; kk < k; ++kk) {
    const __m256d b0 = _mm256_loadu_pd(b + kk * n);
    const __m256d b1 = _mm256_loadu_pd(b + kk * n + 4);
    for (int64_t r = 0; r < mr; ++r) {
      const __m256d av = _mm256_set1_pd(a[r * k + kk]);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int64_t r = 0; r < mr; ++r) {
    _mm256_storeu_pd(c + r * n, acc[r][0]);
    _mm256_storeu_pd(c + r * n + 4, acc[r][1]);
  }
}

inline void tile4(const double* a, const double* b, double* c, int64_t n,
                  int64_t k, int64_t mr, bool accumulate) {
  __m256d acc[4];
  for (int64_t r = 0; r < mr; ++r) {
    acc[r] = accumulate ? _mm256_loadu_pd(c + r * n) : _mm256_setzero_pd();
  }
  for (int64_t kk = 0; kk < k; ++kk) {
    const __m256d b0 = _mm256_loadu_pd(b + kk * n);
    for (int64_t r = 0; r < mr; ++r) {
      acc[r] = _mm256_fmadd_pd(_mm256_set1_pd(a[r * k + kk]), b0, acc[r]);
    }
  }
  for (int64_t r = 0; r < mr; ++r) {
    _mm256_storeu_pd(c + r * n, acc[r]);
  }
}

void gemm_avx2(const double* a, const double* b, double* c, int64_t m,
               int64_t n, int64_t k, bool accumulate) {
  for (int64_t i0 = 0; i0 < m; i0 += 4) {
    const int64_t mr = (m - i0) < 4 ? (m - i0) : 4;
    const double* ab = a + i0 * k;
    double* cb = c + i0 * n;
    int64_t j = 0;
    for (; j + 8 <= n; j += 8) tile8(ab, b + j, cb + j, n, k, mr, accumulate);
    for (; j + 4 <= n; j += 4) tile4(ab, b + j, cb + j, n, k, mr, accumulate);
    for (; j < n; ++j) {
      for (int64_t r = 0; r < mr; ++r) {
        double acc = accumulate ? cb[r * n + j] : 0.0;
        for (int64_t kk = 0; kk < k; ++kk) {
          acc = std::fma(ab[r * k + kk], b[kk * n + j], acc);
        }
        cb[r * n + j] = acc;
      }
    }
  }
}

void add_avx2(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(const double* a, double s, double* out, int64_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
  }
  for (; i < n; ++i) out[i] = a[i] * s;
}

void relu_avx2(const double* a, double* out, int64_t n) {
  // max_pd(x, +0.0) maps -0.0 to +0.0, matching the scalar (x > 0 ? x : 0).
  const __m256d zero = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

}  // namespace

const Kernels& avx2_kernels() {
  static const Kernels k = {"avx2",   gemm_avx2,  add_avx2, sub_avx2,
                            mul_avx2, scale_avx2, relu_avx2};
  return k;
}

}  // namespace cldet::kern

#endif  // x86_64

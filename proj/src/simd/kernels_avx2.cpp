// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 -mfma; only reached after a runtime cpuid check.

#include <immintrin.h>

#include <cstddef>

namespace eagle::simd::avx2 {

double dot(const double* x, const double* y, size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  __m256d acc = _mm256_add_pd(acc0, acc1);
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  __m128d sum2 = _mm_add_pd(lo, hi);
  __m128d sum1 = _mm_add_sd(sum2, _mm_unpackhi_pd(sum2, sum2));
  double total = _mm_cvtsd_f64(sum1);
  for (; i < n; ++i) {
    total += x[i] * y[i];
  }
  return total;
}

void axpy(double a, const double* x, double* y, size_t n) {
  __m256d av = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) {
    y[i] += a * x[i];
  }
}

void scale(double a, double* x, size_t n) {
  __m256d av = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) {
    x[i] *= a;
  }
}

}  // namespace eagle::simd::avx2

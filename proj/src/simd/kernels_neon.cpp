// SPDX-License-Identifier: Apache-2.0

#include <arm_neon.h>

#include <cstddef>

namespace eagle::simd::neon {

double dot(const double* x, const double* y, size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  for (; i + 2 <= n; i += 2) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
  }
  double total = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    total += x[i] * y[i];
  }
  return total;
}

void axpy(double a, const double* x, double* y, size_t n) {
  float64x2_t av = vdupq_n_f64(a);
  size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t yv = vld1q_f64(y + i);
    yv = vfmaq_f64(yv, av, vld1q_f64(x + i));
    vst1q_f64(y + i, yv);
  }
  for (; i < n; ++i) {
    y[i] += a * x[i];
  }
}

void scale(double a, double* x, size_t n) {
  float64x2_t av = vdupq_n_f64(a);
  size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(x + i, vmulq_f64(av, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) {
    x[i] *= a;
  }
}

}  // namespace eagle::simd::neon

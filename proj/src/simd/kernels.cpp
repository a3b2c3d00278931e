// SPDX-License-Identifier: Apache-2.0

#include "eagle/simd/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace eagle::simd {

namespace ref {

double dot(const double* x, const double* y, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    acc += x[i] * y[i];
  }
  return acc;
}

void axpy(double a, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    y[i] += a * x[i];
  }
}

void scale(double a, double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    x[i] *= a;
  }
}

}  // namespace ref

namespace {

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(EAGLE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Backend::neon:
#if defined(EAGLE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend detect_backend() {
  if (const char* env = std::getenv("EAGLE_KERNEL_BACKEND")) {
    std::string name(env);
    Backend wanted = Backend::scalar;
    if (name == "avx2") {
      wanted = Backend::avx2;
    } else if (name == "neon") {
      wanted = Backend::neon;
    } else if (name != "scalar") {
      throw std::runtime_error("unknown EAGLE_KERNEL_BACKEND: " + name);
    }
    if (!backend_available(wanted)) {
      throw std::runtime_error(std::string("EAGLE_KERNEL_BACKEND=") + name +
                               " not supported on this machine/build");
    }
    return wanted;
  }
  if (backend_available(Backend::avx2)) return Backend::avx2;
  if (backend_available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

// encoded as int: -1 = undetected
std::atomic<int> g_backend{-1};

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "?";
}

Backend active_backend() {
  int cur = g_backend.load(std::memory_order_acquire);
  if (cur < 0) {
    Backend detected = detect_backend();
    cur = static_cast<int>(detected);
    g_backend.store(cur, std::memory_order_release);
  }
  return static_cast<Backend>(cur);
}

void force_backend(std::optional<Backend> backend) {
  if (!backend.has_value()) {
    g_backend.store(-1, std::memory_order_release);
    return;
  }
  if (!backend_available(*backend)) {
    throw std::runtime_error(std::string("backend not available: ") +
                             backend_name(*backend));
  }
  g_backend.store(static_cast<int>(*backend), std::memory_order_release);
}

double dot(std::span<const double> x, std::span<const double> y) {
  switch (active_backend()) {
#if defined(EAGLE_HAVE_AVX2)
    case Backend::avx2:
      return avx2::dot(x.data(), y.data(), x.size());
#endif
#if defined(EAGLE_HAVE_NEON)
    case Backend::neon:
      return neon::dot(x.data(), y.data(), x.size());
#endif
    default:
      return ref::dot(x.data(), y.data(), x.size());
  }
}

double nrm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

void axpy(double a, std::span<const double> x, std::span<double> y) {
  switch (active_backend()) {
#if defined(EAGLE_HAVE_AVX2)
    case Backend::avx2:
      avx2::axpy(a, x.data(), y.data(), x.size());
      return;
#endif
#if defined(EAGLE_HAVE_NEON)
    case Backend::neon:
      neon::axpy(a, x.data(), y.data(), x.size());
      return;
#endif
    default:
      ref::axpy(a, x.data(), y.data(), x.size());
  }
}

void scale(double a, std::span<double> x) {
  switch (active_backend()) {
#if defined(EAGLE_HAVE_AVX2)
    case Backend::avx2:
      avx2::scale(a, x.data(), x.size());
      return;
#endif
#if defined(EAGLE_HAVE_NEON)
    case Backend::neon:
      neon::scale(a, x.data(), x.size());
      return;
#endif
    default:
      ref::scale(a, x.data(), x.size());
  }
}

}  // namespace eagle::simd

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>

namespace eagle::simd {

enum class Backend { scalar, avx2, neon };

const char* backend_name(Backend b);

/// Backend used by the dispatching entry points below. Detected once from
/// CPU features; override with force_backend() (tests) or the
/// EAGLE_KERNEL_BACKEND environment variable ("scalar", "avx2", "neon").
Backend active_backend();

/// Pin the dispatch target, or pass nullopt to return to auto-detection.
/// Forcing a backend the build/CPU does not support throws.
void force_backend(std::optional<Backend> backend);

double dot(std::span<const double> x, std::span<const double> y);
double nrm2(std::span<const double> x);

/// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

/// x *= a
void scale(double a, std::span<double> x);

/// Scalar reference kernels. The dispatched variants above are
/// equivalence-tested against these.
namespace ref {
double dot(const double* x, const double* y, size_t n);
void axpy(double a, const double* x, double* y, size_t n);
void scale(double a, double* x, size_t n);
}  // namespace ref

#if defined(EAGLE_HAVE_AVX2)
namespace avx2 {
double dot(const double* x, const double* y, size_t n);
void axpy(double a, const double* x, double* y, size_t n);
void scale(double a, double* x, size_t n);
}  // namespace avx2
#endif

#if defined(EAGLE_HAVE_NEON)
namespace neon {
double dot(const double* x, const double* y, size_t n);
void axpy(double a, const double* x, double* y, size_t n);
void scale(double a, double* x, size_t n);
}  // namespace neon
#endif

}  // namespace eagle::simd

// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "eagle/rng.hpp"
#include "eagle/simd/kernels.hpp"

using namespace eagle;

namespace {

std::vector<double> random_vec(SplitMix64& rng, size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * rng.next_double() - 1.0;
  return v;
}

}  // namespace

TEST_CASE("dispatched kernels match the scalar reference") {
  SplitMix64 rng(42);
  // sizes straddle the vector width, including remainders and empty
  for (size_t n : {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 63, 64, 65, 200}) {
    std::vector<double> x = random_vec(rng, n);
    std::vector<double> y = random_vec(rng, n);

    double want_dot = simd::ref::dot(x.data(), y.data(), n);
    double got_dot = simd::dot(x, y);
    CHECK(got_dot == doctest::Approx(want_dot).epsilon(1e-12));

    std::vector<double> y_ref = y;
    simd::ref::axpy(0.37, x.data(), y_ref.data(), n);
    std::vector<double> y_got = y;
    simd::axpy(0.37, x, y_got);
    for (size_t i = 0; i < n; ++i) {
      CHECK(y_got[i] == doctest::Approx(y_ref[i]).epsilon(1e-14));
    }

    std::vector<double> x_ref = x;
    simd::ref::scale(-1.25, x_ref.data(), n);
    std::vector<double> x_got = x;
    simd::scale(-1.25, x_got);
    for (size_t i = 0; i < n; ++i) {
      CHECK(x_got[i] == x_ref[i]);  // scale is elementwise, exactly equal
    }
  }
}

#if defined(EAGLE_HAVE_AVX2)
TEST_CASE("avx2 variant agrees with scalar when the cpu supports it") {
  if (!__builtin_cpu_supports("avx2")) return;
  SplitMix64 rng(7);
  for (size_t n : {1, 4, 5, 64, 129}) {
    std::vector<double> x = random_vec(rng, n);
    std::vector<double> y = random_vec(rng, n);
    double scalar = simd::ref::dot(x.data(), y.data(), n);
    double vec = simd::avx2::dot(x.data(), y.data(), n);
    CHECK(vec == doctest::Approx(scalar).epsilon(1e-12));
  }
}
#endif

TEST_CASE("forcing a backend changes dispatch and is reversible") {
  simd::Backend detected = simd::active_backend();
  simd::force_backend(simd::Backend::scalar);
  CHECK(simd::active_backend() == simd::Backend::scalar);

  std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK(simd::dot(x, x) == doctest::Approx(55.0));

  simd::force_backend(std::nullopt);
  CHECK(simd::active_backend() == detected);
}

TEST_CASE("nrm2 matches sqrt of self dot") {
  SplitMix64 rng(3);
  std::vector<double> x = random_vec(rng, 64);
  CHECK(simd::nrm2(x) ==
        doctest::Approx(std::sqrt(simd::ref::dot(x.data(), x.data(), 64))));
}

TEST_CASE("dot is symmetric") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x = random_vec(rng, 33);
    std::vector<double> y = random_vec(rng, 33);
    CHECK(simd::dot(x, y) == simd::dot(y, x));
  }
}

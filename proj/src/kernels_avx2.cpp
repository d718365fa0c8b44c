#if defined(__x86_64__)

#include <immintrin.h>

#include "capgen/kernels.hpp"

// AVX2 without FMA: mul and add stay separate instructions, so every lane
// computes exactly what the scalar reference computes.

namespace capgen::kernels {
namespace avx2 {

static void axpy(std::size_t n, double a, const double* x, double* y) {
  std::size_t i = 0;
  __m256d va = _mm256_set1_pd(a);
  for (; i + 4 <= n; i += 4) {
    __m256d vx = _mm256_loadu_pd(x + i);
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, vx));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

static void scale(std::size_t n, double a, const double* x, double* y) {
  std::size_t i = 0;
  __m256d va = _mm256_set1_pd(a);
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = a * x[i];
}

static void add(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(z + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) z[i] = x[i] + y[i];
}

static void sub(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(z + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) z[i] = x[i] - y[i];
}

static void mul(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

static void mul_acc(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vz = _mm256_loadu_pd(z + i);
    vz = _mm256_add_pd(vz, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(z + i, vz);
  }
  for (; i < n; ++i) z[i] += x[i] * y[i];
}

}  // namespace avx2

const Dispatch avx2_dispatch = {
    avx2::axpy, avx2::scale, avx2::add, avx2::sub, avx2::mul, avx2::mul_acc,
};

}  // namespace capgen::kernels

#endif  // __x86_64__

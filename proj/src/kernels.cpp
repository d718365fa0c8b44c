#include "capgen/kernels.hpp"

#if defined(__x86_64__)
#include <cpuid.h>
#endif

namespace capgen::kernels {

namespace scalar {

static void axpy(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

static void scale(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

static void add(std::size_t n, const double* x, const double* y, double* z) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

static void sub(std::size_t n, const double* x, const double* y, double* z) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
}

static void mul(std::size_t n, const double* x, const double* y, double* z) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

static void mul_acc(std::size_t n, const double* x, const double* y, double* z) {
  for (std::size_t i = 0; i < n; ++i) z[i] += x[i] * y[i];
}

}  // namespace scalar

static const Dispatch scalar_dispatch = {
    scalar::axpy, scalar::scale, scalar::add, scalar::sub, scalar::mul, scalar::mul_acc,
};

const Dispatch& scalar_backend() { return scalar_dispatch; }

bool cpu_has_avx2() {
#if defined(__x86_64__)
  unsigned eax, ebx, ecx, edx;
  if (!__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) return false;
  return (ebx & (1u << 5)) != 0;  // AVX2 bit
#else
  return false;
#endif
}

namespace {

Backend pick_default() {
#if defined(__x86_64__)
  if (cpu_has_avx2()) return Backend::avx2;
#endif
  return Backend::scalar;
}

Backend g_backend = pick_default();

}  // namespace

const Dispatch& active() {
#if defined(__x86_64__)
  if (g_backend == Backend::avx2) return avx2_dispatch;
#endif
  return scalar_dispatch;
}

Backend active_backend() { return g_backend; }

std::string backend_name() { return g_backend == Backend::avx2 ? "avx2" : "scalar"; }

void force_backend(Backend b) {
  if (b == Backend::avx2 && !cpu_has_avx2()) return;
  g_backend = b;
}

void reset_backend() { g_backend = pick_default(); }

}  // namespace capgen::kernels

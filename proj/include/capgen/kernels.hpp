#pragma once

#include <cstddef>
#include <string>

namespace capgen::kernels {

// Elementwise vector primitives behind the tensor ops. Each has a scalar
// reference implementation and an AVX2 variant selected at runtime; the two
// perform the same per-element arithmetic in the same order, so results are
// bit-identical across lanes.
struct Dispatch {
  // y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // y[i] = a * x[i]
  void (*scale)(std::size_t n, double a, const double* x, double* y);
  // z[i] = x[i] + y[i]
  void (*add)(std::size_t n, const double* x, const double* y, double* z);
  // z[i] = x[i] - y[i]
  void (*sub)(std::size_t n, const double* x, const double* y, double* z);
  // z[i] = x[i] * y[i]
  void (*mul)(std::size_t n, const double* x, const double* y, double* z);
  // z[i] += x[i] * y[i]
  void (*mul_acc)(std::size_t n, const double* x, const double* y, double* z);
};

enum class Backend { scalar, avx2 };

const Dispatch& scalar_backend();
const Dispatch& active();
Backend active_backend();
std::string backend_name();

// Force a backend (tests use this to compare variants); Backend::avx2 is
// ignored when the CPU lacks AVX2.
void force_backend(Backend b);
void reset_backend();

bool cpu_has_avx2();

#if defined(__x86_64__)
extern const Dispatch avx2_dispatch;
#endif

}  // namespace capgen::kernels

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "bdeblur/simd.hpp"

namespace bdeblur::simd {

namespace {

Isa detect() {
  if (const char* env = std::getenv("BDEBLUR_ISA"); env && std::strcmp(env, "scalar") == 0)
    return Isa::scalar;
  return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#ifdef BDEBLUR_HAVE_AVX2_KERNELS
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

bool set_isa(Isa isa) {
  if (!isa_supported(isa)) return false;
  current().store(isa, std::memory_order_relaxed);
  return true;
}

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

#ifdef BDEBLUR_HAVE_AVX2_KERNELS
#define BDEBLUR_DISPATCH(fn, ...) \
  return active_isa() == Isa::avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__)
#else
#define BDEBLUR_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

void gemm_acc(ConstMat a, ConstMat b, Mat c) { BDEBLUR_DISPATCH(gemm_acc, a, b, c); }

double dot(const double* x, const double* y, size_t n) { BDEBLUR_DISPATCH(dot, x, y, n); }

void axpy(double alpha, const double* x, double* y, size_t n) {
  BDEBLUR_DISPATCH(axpy, alpha, x, y, n);
}

void scale_complex(const double* gain, const std::complex<double>* in, std::complex<double>* out,
                   size_t n) {
  BDEBLUR_DISPATCH(scale_complex, gain, in, out, n);
}

}  // namespace bdeblur::simd

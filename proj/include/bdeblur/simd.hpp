#pragma once

// Arithmetic inner loops. Every kernel has a portable scalar reference in
// `simd::scalar` and, on x86-64, an AVX2+FMA variant in `simd::avx2`. The
// unqualified entry points dispatch once, at first use, to the best variant
// the CPU supports. Setting BDEBLUR_ISA=scalar in the environment pins the
// reference path.

#include <complex>
#include <cstddef>

namespace bdeblur::simd {

enum class Isa { scalar, avx2 };

/// Read-only strided row-major matrix view.
struct ConstMat {
  const double* data;
  size_t rows;
  size_t cols;
  size_t stride;
  const double* row(size_t r) const { return data + r * stride; }
};

struct Mat {
  double* data;
  size_t rows;
  size_t cols;
  size_t stride;
  double* row(size_t r) const { return data + r * stride; }
  operator ConstMat() const { return {data, rows, cols, stride}; }
};

/// ISA chosen by the dispatcher.
Isa active_isa();
/// Overrides the dispatcher; returns false if the ISA is unavailable.
bool set_isa(Isa isa);
bool isa_supported(Isa isa);
const char* isa_name(Isa isa);

/// c += a * b. Shapes: a m x k, b k x n, c m x n.
void gemm_acc(ConstMat a, ConstMat b, Mat c);
double dot(const double* x, const double* y, size_t n);
/// y += alpha * x
void axpy(double alpha, const double* x, double* y, size_t n);
/// out[i] = gain[i] * in[i] for real gains and complex data.
void scale_complex(const double* gain, const std::complex<double>* in, std::complex<double>* out,
                   size_t n);

namespace scalar {
void gemm_acc(ConstMat a, ConstMat b, Mat c);
double dot(const double* x, const double* y, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);
void scale_complex(const double* gain, const std::complex<double>* in, std::complex<double>* out,
                   size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define BDEBLUR_HAVE_AVX2_KERNELS 1
namespace avx2 {
void gemm_acc(ConstMat a, ConstMat b, Mat c);
double dot(const double* x, const double* y, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);
void scale_complex(const double* gain, const std::complex<double>* in, std::complex<double>* out,
                   size_t n);
}  // namespace avx2
#endif

}  // namespace bdeblur::simd

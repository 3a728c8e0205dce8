#include "bdeblur/simd.hpp"

namespace bdeblur::simd::scalar {

void gemm_acc(ConstMat a, ConstMat b, Mat c) {
  for (size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (size_t p = 0; p < a.cols; ++p) {
      const double av = ar[p];
      const double* br = b.row(p);
      for (size_t j = 0; j < b.cols; ++j) cr[j] += av * br[j];
    }
  }
}

double dot(const double* x, const double* y, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_complex(const double* gain, const std::complex<double>* in, std::complex<double>* out,
                   size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = gain[i] * in[i];
}

}  // namespace bdeblur::simd::scalar

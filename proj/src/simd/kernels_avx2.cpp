// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "bdeblur/simd.hpp"

namespace bdeblur::simd::avx2 {

namespace {

constexpr size_t kKc = 256;  // depth block
constexpr size_t kMc = 96;   // rows of A packed per block
constexpr size_t kMr = 6;
constexpr size_t kNr = 8;

// Packs b[p0:p0+kc, j0:j0+nc] into 8-wide column panels, zero-padded.
void pack_b(ConstMat b, size_t p0, size_t kc, size_t j0, size_t nc, double* dst) {
  for (size_t j = 0; j < nc; j += kNr) {
    const size_t w = std::min(kNr, nc - j);
    for (size_t p = 0; p < kc; ++p) {
      const double* src = b.row(p0 + p) + j0 + j;
      size_t q = 0;
      for (; q < w; ++q) dst[q] = src[q];
      for (; q < kNr; ++q) dst[q] = 0.0;
      dst += kNr;
    }
  }
}

// Packs a[i0:i0+mc, p0:p0+kc] into 6-row panels, interleaved by depth.
void pack_a(ConstMat a, size_t i0, size_t mc, size_t p0, size_t kc, double* dst) {
  for (size_t i = 0; i < mc; i += kMr) {
    const size_t h = std::min(kMr, mc - i);
    for (size_t p = 0; p < kc; ++p) {
      size_t r = 0;
      for (; r < h; ++r) dst[r] = a.row(i0 + i + r)[p0 + p];
      for (; r < kMr; ++r) dst[r] = 0.0;
      dst += kMr;
    }
  }
}

// 6x8 register tile over packed panels; writes back only the valid h x w corner.
inline void micro(const double* ap, const double* bp, size_t kc, double* c, size_t ldc, size_t h,
                  size_t w) {
  __m256d acc[kMr][2];
  for (size_t r = 0; r < kMr; ++r) acc[r][0] = acc[r][1] = _mm256_setzero_pd();
  for (size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    for (size_t r = 0; r < kMr; ++r) {
      const __m256d av = _mm256_broadcast_sd(ap + r);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
    ap += kMr;
    bp += kNr;
  }
  if (h == kMr && w == kNr) {
    for (size_t r = 0; r < kMr; ++r) {
      double* cr = c + r * ldc;
      _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), acc[r][0]));
      _mm256_storeu_pd(cr + 4, _mm256_add_pd(_mm256_loadu_pd(cr + 4), acc[r][1]));
    }
    return;
  }
  alignas(32) double tile[kMr][kNr];
  for (size_t r = 0; r < kMr; ++r) {
    _mm256_store_pd(tile[r], acc[r][0]);
    _mm256_store_pd(tile[r] + 4, acc[r][1]);
  }
  for (size_t r = 0; r < h; ++r)
    for (size_t q = 0; q < w; ++q) c[r * ldc + q] += tile[r][q];
}

}  // namespace

void gemm_acc(ConstMat a, ConstMat b, Mat c) {
  const size_t m = a.rows, k = a.cols, n = b.cols;
  if (m == 0 || n == 0 || k == 0) return;
  const size_t n_pad = (n + kNr - 1) / kNr * kNr;
  thread_local std::vector<double> bbuf, abuf;
  bbuf.resize(kKc * n_pad);
  abuf.resize(kKc * (kMc + kMr));
  for (size_t p0 = 0; p0 < k; p0 += kKc) {
    const size_t kc = std::min(kKc, k - p0);
    pack_b(b, p0, kc, 0, n, bbuf.data());
    for (size_t i0 = 0; i0 < m; i0 += kMc) {
      const size_t mc = std::min(kMc, m - i0);
      pack_a(a, i0, mc, p0, kc, abuf.data());
      for (size_t j = 0; j < n; j += kNr) {
        const double* bp = bbuf.data() + j * kc;
        const size_t w = std::min(kNr, n - j);
        for (size_t i = 0; i < mc; i += kMr) {
          micro(abuf.data() + i * kc, bp, kc, c.row(i0 + i) + j, c.stride, std::min(kMr, mc - i), w);
        }
      }
    }
  }
}

double dot(const double* x, const double* y, size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_complex(const double* gain, const std::complex<double>* in, std::complex<double>* out,
                   size_t n) {
  const double* src = reinterpret_cast<const double*>(in);
  double* dst = reinterpret_cast<double*>(out);
  size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    // (g0, g0, g1, g1) * (re0, im0, re1, im1)
    const __m128d g = _mm_loadu_pd(gain + i);
    const __m256d gg = _mm256_permute4x64_pd(_mm256_castpd128_pd256(g), 0b01010000);
    _mm256_storeu_pd(dst + 2 * i, _mm256_mul_pd(gg, _mm256_loadu_pd(src + 2 * i)));
  }
  for (; i < n; ++i) out[i] = gain[i] * in[i];
}

}  // namespace bdeblur::simd::avx2

#pragma once

// Shared fixtures and brute-force oracles for the test suites.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "bdeblur/core.hpp"

namespace bdeblur::testing {

inline Plane random_plane(int rows, int cols, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Plane p(rows, cols);
  for (auto& v : p) v = u(rng);
  return p;
}

inline Image random_image(int h, int w, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w, c);
  for (auto& v : img.values()) v = u(rng);
  return img;
}

/// Random non-negative kernel summing to one.
inline Plane random_kernel_plane(int side, std::mt19937_64& rng) {
  Plane k = random_plane(side, side, rng, 0.0, 1.0);
  double s = 0.0;
  for (double v : k) s += v;
  for (auto& v : k) v /= s;
  return k;
}

/// O(N^2) centered unitary DFT.
inline CPlane direct_dft(const CPlane& x) {
  const int R = x.rows(), C = x.cols();
  CPlane out(R, C);
  const double norm = 1.0 / std::sqrt(static_cast<double>(R) * C);
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) {
      const int u = i - R / 2, v = j - C / 2;
      std::complex<double> acc = 0.0;
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
          const double ph = -2.0 * std::numbers::pi * (static_cast<double>(u) * r / R + static_cast<double>(v) * c / C);
          acc += x(r, c) * std::polar(1.0, ph);
        }
      out(i, j) = acc * norm;
    }
  return out;
}

inline CPlane to_complex(const Plane& p) {
  CPlane out(p.rows(), p.cols());
  for (size_t i = 0; i < p.size(); ++i) out.values()[i] = p.values()[i];
  return out;
}

inline int wrap(int i, int n) { return ((i % n) + n) % n; }

/// Circular convolution with a kernel centered at (K/2, K/2), by double loop.
inline Plane direct_circular_conv(const Plane& img, const Plane& k) {
  const int H = img.rows(), W = img.cols(), K = k.rows(), h = K / 2;
  Plane out(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) acc += k(i, j) * img(wrap(y - (i - h), H), wrap(x - (j - h), W));
      out(y, x) = acc;
    }
  return out;
}

/// Same convolution, but with half-sample mirrored boundary handling.
inline int mirror(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

inline Plane direct_reflect_conv(const Plane& img, const Plane& k) {
  const int H = img.rows(), W = img.cols(), K = k.rows(), h = K / 2;
  Plane out(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) acc += k(i, j) * img(mirror(y - (i - h), H), mirror(x - (j - h), W));
      out(y, x) = acc;
    }
  return out;
}

inline double max_abs_diff(const Plane& a, const Plane& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

inline double max_abs_diff(const CPlane& a, const CPlane& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace bdeblur::testing

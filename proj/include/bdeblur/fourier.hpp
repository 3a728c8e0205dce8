#pragma once

// 2-D DFT machinery.
//
// Conventions:
//  * unitary normalization, 1/sqrt(rows*cols) in both directions, so
//    Parseval holds exactly and the adjoint of dft2 is idft2;
//  * spatial arrays use standard indexing (origin at index 0);
//  * spectra are stored centered: frequency (u, v) lives at
//    (u + rows/2, v + cols/2), so for odd P the DC term is the middle cell and
//    u, v range over [-P/2, P/2].
//
// Patch-level transforms (dft2/idft2 on a Spectrum) only accept odd square
// grids. The *_rect variants take any shape and are used for whole images.

#include <span>
#include <vector>

#include "bdeblur/core.hpp"

namespace bdeblur {

/// Centered complex spectrum of a square patch with odd side.
using Spectrum = CPlane;

/// Coefficient at integer frequency (u, v) of a centered spectrum.
inline cplx& at_freq(CPlane& s, int u, int v) { return s(u + s.rows() / 2, v + s.cols() / 2); }
inline const cplx& at_freq(const CPlane& s, int u, int v) {
  return s(u + s.rows() / 2, v + s.cols() / 2);
}

/// Odd square real patch -> centered spectrum.
Spectrum dft2(const Plane& patch);
/// Real part of the inverse transform of a centered spectrum.
Plane idft2(const Spectrum& s);

// Any shape. Spatial <-> centered spectrum, complex both ways.
CPlane dft2_rect(const CPlane& x);
CPlane dft2_rect(const Plane& x);
CPlane idft2_rect(const CPlane& s);

/// Embeds `p` at the center of a target x target zero patch.
Plane pad_center(const Plane& p, int target);
/// Center rows x cols window; for odd sizes exactly inverts pad_center.
Plane crop_center(const Plane& p, int rows, int cols);
inline Plane crop_center(const Plane& p, int side) { return crop_center(p, side, side); }

/// Coefficients with max(|u|,|v|) <= radius, as a (2r+1)^2 centered grid.
CPlane lowpass_coeffs(const Spectrum& s, int radius);

// Half spectra --------------------------------------------------------------
//
// Canonical ordering for side P = 2h+1: DC first, then (0, v) for v = 1..h,
// then rows u = 1..h with v = -h..h. The remaining coefficients are the
// conjugates of these.

struct FreqIndex {
  int u;
  int v;
};

/// Number of non-redundant coefficients, (P*P+1)/2.
int half_size(int side);
const std::vector<FreqIndex>& half_order(int side);
std::vector<cplx> compact_half(const Spectrum& s);
Spectrum expand_half(std::span<const cplx> half, int side);

// Convolution ---------------------------------------------------------------

enum class Boundary { circular, reflect };

/// Mirror padding (half-sample symmetric: ...c b a | a b c ... ).
Plane pad_reflect(const Plane& p, int pad_rows, int pad_cols);

/// Convolves with an odd square kernel centered at (K/2, K/2). Circular mode
/// wraps; reflect mode pads by K/2 mirrored pixels, convolves, and crops.
Plane fft_convolve(const Plane& img, const Plane& kernel, Boundary boundary);
Image fft_convolve(const Image& img, const Plane& kernel, Boundary boundary);
/// One convolution per kernel, sharing the image transform. In reflect mode
/// the padding is the largest K/2, which gives the same result per kernel.
std::vector<Plane> fft_convolve_many(const Plane& img, std::span<const Plane> kernels,
                                     Boundary boundary);

/// Spectrum of `kernel` embedded in a rows x cols grid with its center moved to
/// the origin, scaled so that dft2_rect(x) * result is the spectrum of the
/// circular convolution.
CPlane kernel_transfer(const Plane& kernel, int rows, int cols);

}  // namespace bdeblur

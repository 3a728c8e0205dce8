#pragma once

// Whole-image restoration: burst normalization and alignment, patchwise
// network inference, Hann-weighted recomposition and chroma transfer from
// the vanilla FBA result.

#include <utility>
#include <vector>

#include "bdeblur/core.hpp"
#include "bdeblur/deconvnet.hpp"
#include "bdeblur/nn.hpp"

namespace bdeblur {

struct DeployConfig {
  int stride = 5;
  int burst = kStandardBurst;
  double smoothing_sigma = 2.0;
  double vanilla_p = 11.0;
  bool align = true;
  bool color_transfer = true;
  size_t batch = 32;  // patch positions per network call
};

void validate(const DeployConfig& cfg);

/// Integer shift (dy, dx) such that rolling `moving` by it best matches `ref`,
/// by phase correlation.
std::pair<int, int> phase_correlation_shift(const Plane& ref, const Plane& moving);

/// Circular shift: out(y + dy, x + dx) = img(y, x).
Image roll(const Image& img, int dy, int dx);

/// Aligns every frame to the sharpest one (highest gradient_energy).
std::vector<Image> align_burst(const std::vector<Image>& images);

/// Cyclic duplication up to `target` frames, or selection of the `target`
/// sharpest frames (original order kept); then alignment if requested.
std::vector<Image> normalize_burst(const std::vector<Image>& images, int target = kStandardBurst,
                                   bool align = true);

/// Outer product of 1-D Hann windows 0.5 (1 - cos(2 pi n / (side - 1))); side 1
/// gives [1].
Plane hanning2d(int side);

struct PatchPos {
  int row = 0;  // top-left corner
  int col = 0;
};

struct Rect {
  int row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // half-open
};

/// Raised when some required output pixel receives no window weight.
struct CoverageError : InvalidArgument {
  Rect uncovered;  // bounding box of the uncovered pixels
  CoverageError(const std::string& what, Rect box) : InvalidArgument(what), uncovered(box) {}
};

/// Sum of window-weighted patches divided by the summed window. Pixels outside
/// `required` (default: the whole output) may stay uncovered and are left 0.
Plane recompose(const std::vector<Plane>& patches, const std::vector<PatchPos>& positions,
                int rows, int cols, const Rect* required = nullptr);

/// Output-patch origins along an axis of `length` pixels: from -(33 / 2)
/// every `stride` pixels, the last one moved to length - 17 so that every
/// pixel sees the interior of some window.
std::vector<int> patch_origins(int length, int stride);

/// Network restoration of one plane (already normalized/aligned frames).
Plane deblur_plane(const std::vector<Plane>& frames, const ModelParams& params,
                   const DeployConfig& cfg);

struct DeblurResult {
  Image image;    // final output, clamped to [0,1]
  Image network;  // network reconstruction before color transfer
  Image fba;      // vanilla FBA on the same burst
  Image lab;      // L from `network`, a,b from `fba` (RGB inputs only)
};

DeblurResult deblur_burst(const std::vector<Image>& images, const ModelParams& params,
                          const DeployConfig& cfg = {});

/// Vanilla FBA of whole images, per channel, after optional alignment.
Image fba_only(const std::vector<Image>& images, double p = 11.0, double smoothing_sigma = 2.0,
               bool align = true);

}  // namespace bdeblur

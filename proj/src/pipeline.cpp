#include "bdeblur/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "bdeblur/fba.hpp"
#include "bdeblur/fourier.hpp"

namespace bdeblur {

void validate(const DeployConfig& cfg) {
  if (cfg.stride < 1 || cfg.stride > kPatchSide)
    throw InvalidArgument("DeployConfig: stride must lie in [1, 65]");
  if (cfg.burst < 1) throw InvalidArgument("DeployConfig: burst must be positive");
  if (!(cfg.smoothing_sigma >= 0.0)) throw InvalidArgument("DeployConfig: smoothing_sigma must be >= 0");
  if (!std::isfinite(cfg.vanilla_p)) throw InvalidArgument("DeployConfig: vanilla_p must be finite");
  if (cfg.batch < 1) throw InvalidArgument("DeployConfig: batch must be positive");
}

// Alignment ------------------------------------------------------------------------

std::pair<int, int> phase_correlation_shift(const Plane& ref, const Plane& moving) {
  if (!ref.same_shape(moving) || ref.empty())
    throw InvalidArgument("phase_correlation_shift: shape mismatch");
  const CPlane a = dft2_rect(ref), b = dft2_rect(moving);
  CPlane cross(ref.rows(), ref.cols());
  for (size_t i = 0; i < cross.size(); ++i) {
    const cplx z = a.values()[i] * std::conj(b.values()[i]);
    const double m = std::abs(z);
    cross.values()[i] = m > 1e-12 ? z / m : cplx(0.0);
  }
  const CPlane corr = idft2_rect(cross);
  size_t best = 0;
  for (size_t i = 1; i < corr.size(); ++i)
    if (corr.values()[i].real() > corr.values()[best].real()) best = i;
  int dy = static_cast<int>(best / ref.cols()), dx = static_cast<int>(best % ref.cols());
  if (dy > ref.rows() / 2) dy -= ref.rows();
  if (dx > ref.cols() / 2) dx -= ref.cols();
  return {dy, dx};
}

Image roll(const Image& img, int dy, int dx) {
  Image out(img.height(), img.width(), img.channels());
  const int h = img.height(), w = img.width();
  for (int y = 0; y < h; ++y) {
    const int ty = ((y + dy) % h + h) % h;
    for (int x = 0; x < w; ++x) {
      const int tx = ((x + dx) % w + w) % w;
      for (int c = 0; c < img.channels(); ++c) out.at(ty, tx, c) = img.at(y, x, c);
    }
  }
  return out;
}

namespace {

void require_same_shapes(const std::vector<Image>& images, const char* what) {
  if (images.empty()) throw InvalidArgument(std::string(what) + ": no images");
  for (const auto& img : images)
    if (!img.same_shape(images[0]) || img.size() == 0)
      throw InvalidArgument(std::string(what) + ": images differ in shape");
}

size_t sharpest(const std::vector<Image>& images) {
  size_t best = 0;
  double best_e = gradient_energy(images[0]);
  for (size_t i = 1; i < images.size(); ++i) {
    const double e = gradient_energy(images[i]);
    if (e > best_e) {
      best = i;
      best_e = e;
    }
  }
  return best;
}

}  // namespace

std::vector<Image> align_burst(const std::vector<Image>& images) {
  require_same_shapes(images, "align_burst");
  const size_t ref = sharpest(images);
  const Plane ref_gray = images[ref].gray();
  std::vector<Image> out;
  out.reserve(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    if (i == ref) {
      out.push_back(images[i]);
      continue;
    }
    const auto [dy, dx] = phase_correlation_shift(ref_gray, images[i].gray());
    out.push_back(dy == 0 && dx == 0 ? images[i] : roll(images[i], dy, dx));
  }
  return out;
}

std::vector<Image> normalize_burst(const std::vector<Image>& images, int target, bool align) {
  require_same_shapes(images, "normalize_burst");
  if (target < 1) throw InvalidArgument("normalize_burst: target must be positive");
  const size_t n = static_cast<size_t>(target);
  std::vector<Image> out;
  if (images.size() <= n) {
    for (size_t i = 0; i < n; ++i) out.push_back(images[i % images.size()]);
  } else {
    std::vector<double> energy(images.size());
    for (size_t i = 0; i < images.size(); ++i) energy[i] = gradient_energy(images[i]);
    std::vector<size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return energy[a] > energy[b]; });
    order.resize(n);
    std::sort(order.begin(), order.end());
    for (size_t i : order) out.push_back(images[i]);
  }
  return align ? align_burst(out) : out;
}

// Recomposition ------------------------------------------------------------------------

Plane hanning2d(int side) {
  if (side < 1) throw InvalidArgument("hanning2d: side must be >= 1");
  std::vector<double> w(side, 1.0);
  // Evaluated on the first half and mirrored, so the window is exactly symmetric.
  if (side > 1)
    for (int n = 0; n <= (side - 1) / 2; ++n)
      w[n] = w[side - 1 - n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / (side - 1)));
  Plane out(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) out(r, c) = w[r] * w[c];
  return out;
}

Plane recompose(const std::vector<Plane>& patches, const std::vector<PatchPos>& positions, int rows,
                int cols, const Rect* required) {
  if (patches.size() != positions.size())
    throw InvalidArgument("recompose: patch and position counts differ");
  if (rows < 1 || cols < 1) throw InvalidArgument("recompose: empty output");
  Plane num(rows, cols), den(rows, cols);
  Plane window;
  for (size_t i = 0; i < patches.size(); ++i) {
    const Plane& p = patches[i];
    if (p.rows() != p.cols()) throw InvalidArgument("recompose: patches must be square");
    if (window.rows() != p.rows()) window = hanning2d(p.rows());
    const PatchPos pos = positions[i];
    if (pos.row < 0 || pos.col < 0 || pos.row + p.rows() > rows || pos.col + p.cols() > cols)
      throw InvalidArgument("recompose: patch footprint outside the output");
    for (int r = 0; r < p.rows(); ++r)
      for (int c = 0; c < p.cols(); ++c) {
        num(pos.row + r, pos.col + c) += window(r, c) * p(r, c);
        den(pos.row + r, pos.col + c) += window(r, c);
      }
  }
  const Rect need = required ? *required : Rect{0, 0, rows, cols};
  Rect bad{rows, cols, -1, -1};
  Plane out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (den(r, c) > 0.0) {
        out(r, c) = num(r, c) / den(r, c);
      } else if (r >= need.row0 && r < need.row1 && c >= need.col0 && c < need.col1) {
        bad = {std::min(bad.row0, r), std::min(bad.col0, c), std::max(bad.row1, r + 1),
               std::max(bad.col1, c + 1)};
      }
    }
  if (bad.row1 > 0)
    throw CoverageError("recompose: uncovered pixels in rows [" + std::to_string(bad.row0) + ", " +
                            std::to_string(bad.row1) + "), cols [" + std::to_string(bad.col0) + ", " +
                            std::to_string(bad.col1) + ")",
                        bad);
  return out;
}

std::vector<int> patch_origins(int length, int stride) {
  if (length < 1) throw InvalidArgument("patch_origins: empty axis");
  if (stride < 1) throw InvalidArgument("patch_origins: stride must be positive");
  const int first = -(kOutputSide / 2), last = length - (kOutputSide / 2 + 1);
  std::vector<int> out;
  for (int o = first; o < last; o += stride) out.push_back(o);
  out.push_back(last);
  return out;
}

// Restoration -------------------------------------------------------------------------------

namespace {

constexpr int kImagePad = 32;
constexpr int kMargin = (kPatchSide - kOutputSide) / 2;  // 16

Plane crop(const Plane& p, int r0, int c0, int rows, int cols) {
  Plane out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = p(r0 + r, c0 + c);
  return out;
}

}  // namespace

Plane deblur_plane(const std::vector<Plane>& frames, const ModelParams& params,
                   const DeployConfig& cfg) {
  validate(cfg);
  if (frames.empty()) throw InvalidArgument("deblur_plane: no frames");
  const int h = frames[0].rows(), w = frames[0].cols();
  std::vector<Plane> padded;
  for (const auto& f : frames) {
    if (!f.same_shape(frames[0])) throw InvalidArgument("deblur_plane: frames differ in shape");
    padded.push_back(pad_reflect(f, kImagePad, kImagePad));
  }
  // Canvas coordinates are image coordinates shifted by kMargin, so the
  // first output origin (-kMargin) lands on 0.
  std::vector<PatchPos> positions;
  for (int r : patch_origins(h, cfg.stride))
    for (int c : patch_origins(w, cfg.stride)) positions.push_back({r + kMargin, c + kMargin});

  std::vector<Plane> outputs;
  outputs.reserve(positions.size());
  for (size_t start = 0; start < positions.size(); start += cfg.batch) {
    const size_t end = std::min(positions.size(), start + cfg.batch);
    std::vector<Burst> bursts;
    for (size_t i = start; i < end; ++i) {
      // Output origin o (image coords) has its input patch at o - kMargin,
      // i.e. o - kMargin + kImagePad in padded coordinates.
      const int r0 = positions[i].row - 2 * kMargin + kImagePad;
      const int c0 = positions[i].col - 2 * kMargin + kImagePad;
      Burst b;
      for (const auto& p : padded) b.push_back(crop(p, r0, c0, kPatchSide, kPatchSide));
      bursts.push_back(std::move(b));
    }
    auto fused = net_forward(params, bursts, nullptr, cfg.smoothing_sigma);
    for (auto& f : fused) outputs.push_back(std::move(f));
  }
  const Rect need{kMargin, kMargin, kMargin + h, kMargin + w};
  const Plane canvas = recompose(outputs, positions, h + 2 * kMargin, w + 2 * kMargin, &need);
  return crop(canvas, kMargin, kMargin, h, w);
}

Image fba_only(const std::vector<Image>& images, double p, double smoothing_sigma, bool align) {
  require_same_shapes(images, "fba_only");
  const std::vector<Image> frames = align ? align_burst(images) : images;
  const int channels = frames[0].channels();
  std::vector<Plane> fused;
  for (int c = 0; c < channels; ++c) {
    std::vector<Plane> planes;
    for (const auto& f : frames) planes.push_back(f.channel(c));
    fused.push_back(fba_fuse_frames(planes, FbaConfig{p, smoothing_sigma}));
  }
  return Image::from_planes(fused);
}

DeblurResult deblur_burst(const std::vector<Image>& images, const ModelParams& params,
                          const DeployConfig& cfg) {
  validate(cfg);
  const NetConfig net = infer_config(params);
  if (net.burst != cfg.burst)
    throw InvalidArgument("deblur_burst: model expects bursts of " + std::to_string(net.burst) +
                          " frames, configuration asks for " + std::to_string(cfg.burst));
  const std::vector<Image> frames = normalize_burst(images, cfg.burst, cfg.align);
  const int channels = frames[0].channels();

  DeblurResult result;
  std::vector<Plane> restored;
  for (int c = 0; c < channels; ++c) {
    std::vector<Plane> planes;
    for (const auto& f : frames) planes.push_back(f.channel(c));
    restored.push_back(deblur_plane(planes, params, cfg));
  }
  result.network = Image::from_planes(restored);
  result.fba = fba_only(frames, cfg.vanilla_p, cfg.smoothing_sigma, false);
  if (channels == 3) {
    const Image net_lab = rgb_to_lab(result.network);
    result.lab = cfg.color_transfer ? merge_lab(net_lab, rgb_to_lab(result.fba)) : net_lab;
    result.image = lab_to_rgb(result.lab).clamped();
  } else {
    result.image = result.network.clamped();
  }
  return result;
}

}  // namespace bdeblur

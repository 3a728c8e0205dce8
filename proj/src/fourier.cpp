#include "bdeblur/fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

namespace bdeblur {

namespace {

// FFTW planning is not thread-safe; execution through the new-array interface
// is. Plans are created once per (kind, rows, cols) with FFTW_ESTIMATE, which
// picks the same algorithm on every run, so results are reproducible bit for
// bit.
enum class PlanKind { forward, backward, r2c, c2r };

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(PlanKind kind, int rows, int cols) {
    std::lock_guard lock(mu_);
    auto key = std::make_tuple(kind, rows, cols);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const size_t n = static_cast<size_t>(rows) * cols;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    auto* real = fftw_alloc_real(n);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    switch (kind) {
      case PlanKind::forward:
        plan = fftw_plan_dft_2d(rows, cols, in, out, FFTW_FORWARD, flags);
        break;
      case PlanKind::backward:
        plan = fftw_plan_dft_2d(rows, cols, in, out, FFTW_BACKWARD, flags);
        break;
      case PlanKind::r2c:
        plan = fftw_plan_dft_r2c_2d(rows, cols, real, out, flags);
        break;
      case PlanKind::c2r:
        plan = fftw_plan_dft_c2r_2d(rows, cols, in, real, flags);
        break;
    }
    fftw_free(in);
    fftw_free(out);
    fftw_free(real);
    if (!plan) throw NumericFailure("fft: planning failed");
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<PlanKind, int, int>, fftw_plan> plans_;
};

fftw_complex* fc(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

// Unitary transform of `in` (standard layout) into `out` (standard layout).
void transform(const cplx* in, cplx* out, int rows, int cols, int sign) {
  fftw_plan plan = PlanCache::instance().get(sign == FFTW_FORWARD ? PlanKind::forward : PlanKind::backward,
                                             rows, cols);
  fftw_execute_dft(plan, fc(const_cast<cplx*>(in)), fc(out));
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
  const size_t n = static_cast<size_t>(rows) * cols;
  for (size_t i = 0; i < n; ++i) out[i] *= scale;
}

// Unnormalized half spectrum (rows x (cols/2 + 1)) of a real array.
std::vector<cplx> r2c(const double* in, int rows, int cols) {
  std::vector<cplx> out(static_cast<size_t>(rows) * (cols / 2 + 1));
  fftw_execute_dft_r2c(PlanCache::instance().get(PlanKind::r2c, rows, cols), const_cast<double*>(in),
                       fc(out.data()));
  return out;
}

// Unnormalized inverse of r2c; consumes `half`.
void c2r(std::vector<cplx>& half, double* out, int rows, int cols) {
  fftw_execute_dft_c2r(PlanCache::instance().get(PlanKind::c2r, rows, cols), fc(half.data()), out);
}

inline int wrap(int i, int n) { return ((i % n) + n) % n; }

// Circular shift by (sr, sc): out(r + sr, c + sc) = in(r, c), indices mod size.
void roll(const cplx* in, cplx* out, int rows, int cols, int sr, int sc) {
  for (int r = 0; r < rows; ++r) {
    const cplx* src = in + static_cast<size_t>(r) * cols;
    cplx* dst = out + static_cast<size_t>((r + sr) % rows) * cols;
    std::copy(src, src + cols - sc, dst + sc);
    std::copy(src + cols - sc, src + cols, dst);
  }
}

// standard -> centered
CPlane center(const CPlane& s) {
  CPlane out(s.rows(), s.cols());
  roll(s.data(), out.data(), s.rows(), s.cols(), s.rows() / 2, s.cols() / 2);
  return out;
}

// centered -> standard
CPlane uncenter(const CPlane& s) {
  CPlane out(s.rows(), s.cols());
  roll(s.data(), out.data(), s.rows(), s.cols(), s.rows() - s.rows() / 2, s.cols() - s.cols() / 2);
  return out;
}

void require_odd_square(int rows, int cols, const char* what) {
  if (rows != cols) throw InvalidArgument(std::string(what) + ": patch must be square");
  if (rows % 2 == 0) throw InvalidArgument(std::string(what) + ": side must be odd");
}

int reflect_index(int i, int n) {
  const int period = 2 * n;
  i = wrap(i, period);
  return i < n ? i : period - 1 - i;
}

}  // namespace

CPlane dft2_rect(const CPlane& x) {
  if (x.empty()) throw InvalidArgument("dft2: empty input");
  CPlane out(x.rows(), x.cols());
  transform(x.data(), out.data(), x.rows(), x.cols(), FFTW_FORWARD);
  return center(out);
}

CPlane dft2_rect(const Plane& x) {
  if (x.empty()) throw InvalidArgument("dft2: empty input");
  const int rows = x.rows(), cols = x.cols(), hc = cols / 2 + 1;
  const std::vector<cplx> half = r2c(x.data(), rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
  // Fill the redundant half by conjugate symmetry, X(r, c) = conj(X(-r, -c)),
  // writing straight into the centered layout.
  CPlane out(rows, cols);
  const int sr = rows / 2, sc = cols / 2;
  for (int r = 0; r < rows; ++r) {
    const cplx* h = &half[static_cast<size_t>(r) * hc];
    const cplx* m = &half[static_cast<size_t>(r == 0 ? 0 : rows - r) * hc];
    cplx* dst = &out((r + sr) % rows, 0);
    for (int c = 0; c < hc; ++c) dst[(c + sc) % cols] = h[c] * scale;
    for (int c = hc; c < cols; ++c) dst[(c + sc) % cols] = std::conj(m[cols - c]) * scale;
  }
  return out;
}

CPlane idft2_rect(const CPlane& s) {
  if (s.empty()) throw InvalidArgument("idft2: empty input");
  const CPlane std_layout = uncenter(s);
  CPlane out(s.rows(), s.cols());
  transform(std_layout.data(), out.data(), s.rows(), s.cols(), FFTW_BACKWARD);
  return out;
}

Spectrum dft2(const Plane& patch) {
  require_odd_square(patch.rows(), patch.cols(), "dft2");
  return dft2_rect(patch);
}

Plane idft2(const Spectrum& s) {
  require_odd_square(s.rows(), s.cols(), "idft2");
  const CPlane z = idft2_rect(s);
  Plane out(s.rows(), s.cols());
  for (size_t i = 0; i < z.size(); ++i) out.values()[i] = z.values()[i].real();
  return out;
}

Plane pad_center(const Plane& p, int target) {
  if (p.rows() % 2 == 0 || p.cols() % 2 == 0 || target % 2 == 0)
    throw InvalidArgument("pad_center: sizes must be odd");
  if (target < p.rows() || target < p.cols())
    throw InvalidArgument("pad_center: target smaller than input");
  Plane out(target, target);
  const int r0 = (target - p.rows()) / 2, c0 = (target - p.cols()) / 2;
  for (int r = 0; r < p.rows(); ++r)
    for (int c = 0; c < p.cols(); ++c) out(r0 + r, c0 + c) = p(r, c);
  return out;
}

Plane crop_center(const Plane& p, int rows, int cols) {
  if (rows > p.rows() || cols > p.cols() || rows < 0 || cols < 0)
    throw InvalidArgument("crop_center: window larger than input");
  Plane out(rows, cols);
  const int r0 = (p.rows() - rows) / 2, c0 = (p.cols() - cols) / 2;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = p(r0 + r, c0 + c);
  return out;
}

CPlane lowpass_coeffs(const Spectrum& s, int radius) {
  if (radius < 0 || radius >= (s.rows() + 1) / 2 || radius >= (s.cols() + 1) / 2)
    throw InvalidArgument("lowpass_coeffs: radius out of range");
  const int n = 2 * radius + 1;
  CPlane out(n, n);
  for (int u = -radius; u <= radius; ++u)
    for (int v = -radius; v <= radius; ++v) at_freq(out, u, v) = at_freq(s, u, v);
  return out;
}

int half_size(int side) { return (side * side + 1) / 2; }

const std::vector<FreqIndex>& half_order(int side) {
  if (side <= 0 || side % 2 == 0) throw InvalidArgument("half_order: side must be odd");
  static std::mutex mu;
  static std::map<int, std::vector<FreqIndex>> cache;
  std::lock_guard lock(mu);
  auto& order = cache[side];
  if (order.empty()) {
    const int h = side / 2;
    order.push_back({0, 0});
    for (int v = 1; v <= h; ++v) order.push_back({0, v});
    for (int u = 1; u <= h; ++u)
      for (int v = -h; v <= h; ++v) order.push_back({u, v});
  }
  return order;
}

std::vector<cplx> compact_half(const Spectrum& s) {
  require_odd_square(s.rows(), s.cols(), "compact_half");
  const auto& order = half_order(s.rows());
  std::vector<cplx> out(order.size());
  for (size_t i = 0; i < order.size(); ++i) out[i] = at_freq(s, order[i].u, order[i].v);
  return out;
}

Spectrum expand_half(std::span<const cplx> half, int side) {
  const auto& order = half_order(side);
  if (half.size() != order.size()) throw InvalidArgument("expand_half: wrong coefficient count");
  Spectrum s(side, side);
  for (size_t i = 0; i < order.size(); ++i) {
    at_freq(s, order[i].u, order[i].v) = half[i];
    at_freq(s, -order[i].u, -order[i].v) = std::conj(half[i]);
  }
  // DC maps onto itself; keep it as stored.
  at_freq(s, 0, 0) = half[0];
  return s;
}

Plane pad_reflect(const Plane& p, int pad_rows, int pad_cols) {
  if (p.empty()) throw InvalidArgument("pad_reflect: empty input");
  Plane out(p.rows() + 2 * pad_rows, p.cols() + 2 * pad_cols);
  for (int r = 0; r < out.rows(); ++r) {
    const int sr = reflect_index(r - pad_rows, p.rows());
    for (int c = 0; c < out.cols(); ++c) out(r, c) = p(sr, reflect_index(c - pad_cols, p.cols()));
  }
  return out;
}

CPlane kernel_transfer(const Plane& kernel, int rows, int cols) {
  const int kr = kernel.rows() / 2, kc = kernel.cols() / 2;
  CPlane emb(rows, cols);
  for (int a = 0; a < kernel.rows(); ++a)
    for (int b = 0; b < kernel.cols(); ++b)
      emb(wrap(a - kr, rows), wrap(b - kc, cols)) += kernel(a, b);
  CPlane t = dft2_rect(emb);
  const double scale = std::sqrt(static_cast<double>(rows) * cols);
  for (auto& z : t) z *= scale;
  return t;
}

namespace {

void check_kernel(const Plane& img, const Plane& kernel) {
  require_odd_square(kernel.rows(), kernel.cols(), "fft_convolve");
  if (kernel.rows() > std::min(img.rows(), img.cols()))
    throw InvalidArgument("fft_convolve: kernel larger than image");
}

// Kernel embedded in a rows x cols array with its center at the origin.
std::vector<double> embed_kernel(const Plane& kernel, int rows, int cols) {
  const int kr = kernel.rows() / 2, kc = kernel.cols() / 2;
  std::vector<double> emb(static_cast<size_t>(rows) * cols, 0.0);
  for (int a = 0; a < kernel.rows(); ++a)
    for (int b = 0; b < kernel.cols(); ++b)
      emb[static_cast<size_t>(wrap(a - kr, rows)) * cols + wrap(b - kc, cols)] += kernel(a, b);
  return emb;
}

}  // namespace

std::vector<Plane> fft_convolve_many(const Plane& img, std::span<const Plane> kernels,
                                     Boundary boundary) {
  if (img.empty()) throw InvalidArgument("fft_convolve: empty image");
  int pad = 0;
  for (const auto& k : kernels) {
    check_kernel(img, k);
    if (boundary == Boundary::reflect) pad = std::max(pad, k.rows() / 2);
  }
  const Plane src = pad > 0 ? pad_reflect(img, pad, pad) : img;
  const int rows = src.rows(), cols = src.cols();
  const std::vector<cplx> spec = r2c(src.data(), rows, cols);
  const double inv = 1.0 / (static_cast<double>(rows) * cols);
  std::vector<Plane> out;
  out.reserve(kernels.size());
  std::vector<double> y(static_cast<size_t>(rows) * cols);
  for (const auto& k : kernels) {
    const std::vector<double> emb = embed_kernel(k, rows, cols);
    std::vector<cplx> prod = r2c(emb.data(), rows, cols);
    for (size_t i = 0; i < prod.size(); ++i) prod[i] *= spec[i] * inv;
    c2r(prod, y.data(), rows, cols);
    Plane o(img.rows(), img.cols());
    for (int r = 0; r < img.rows(); ++r)
      for (int c = 0; c < img.cols(); ++c) o(r, c) = y[static_cast<size_t>(r + pad) * cols + c + pad];
    out.push_back(std::move(o));
  }
  return out;
}

Plane fft_convolve(const Plane& img, const Plane& kernel, Boundary boundary) {
  return std::move(fft_convolve_many(img, std::span<const Plane>(&kernel, 1), boundary)[0]);
}

Image fft_convolve(const Image& img, const Plane& kernel, Boundary boundary) {
  Image out(img.height(), img.width(), img.channels());
  for (int c = 0; c < img.channels(); ++c)
    out.set_channel(c, fft_convolve(img.channel(c), kernel, boundary));
  return out;
}

}  // namespace bdeblur

#include "bdeblur/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

namespace bdeblur {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0) throw InvalidArgument("Image: negative dimension");
  if (channels != 1 && channels != 3) throw InvalidArgument("Image: channels must be 1 or 3");
  data_.assign(static_cast<size_t>(height) * width * channels, fill);
}

Image Image::from_plane(const Plane& p) {
  Image img(p.rows(), p.cols(), 1);
  img.data_ = p.values();
  return img;
}

Image Image::from_planes(const std::vector<Plane>& planes) {
  if (planes.size() != 1 && planes.size() != 3)
    throw InvalidArgument("Image::from_planes: need 1 or 3 planes");
  for (const auto& p : planes)
    if (!p.same_shape(planes[0])) throw InvalidArgument("Image::from_planes: shape mismatch");
  Image img(planes[0].rows(), planes[0].cols(), static_cast<int>(planes.size()));
  for (int c = 0; c < img.channels(); ++c) img.set_channel(c, planes[c]);
  return img;
}

Plane Image::channel(int c) const {
  if (c < 0 || c >= channels_) throw InvalidArgument("Image::channel: index out of range");
  Plane p(height_, width_);
  for (size_t i = 0; i < p.size(); ++i) p.values()[i] = data_[i * channels_ + c];
  return p;
}

void Image::set_channel(int c, const Plane& p) {
  if (c < 0 || c >= channels_) throw InvalidArgument("Image::set_channel: index out of range");
  if (p.rows() != height_ || p.cols() != width_)
    throw InvalidArgument("Image::set_channel: shape mismatch");
  for (size_t i = 0; i < p.size(); ++i) data_[i * channels_ + c] = p.values()[i];
}

std::vector<Plane> Image::planes() const {
  std::vector<Plane> out;
  for (int c = 0; c < channels_; ++c) out.push_back(channel(c));
  return out;
}

Plane Image::gray() const {
  if (channels_ == 1) return channel(0);
  Plane p(height_, width_);
  for (size_t i = 0; i < p.size(); ++i) {
    const double* px = &data_[i * 3];
    p.values()[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
  }
  return p;
}

Image Image::clamped(double lo, double hi) const {
  Image out = *this;
  for (auto& v : out.data_) v = std::clamp(v, lo, hi);
  return out;
}

// ---------------------------------------------------------------------------
// Color. sRGB primaries with D65 white (IEC 61966-2-1). The white point is
// taken as the row sums of the RGB->XYZ matrix so that (1,1,1) maps to
// a = b = 0 exactly; the inverse matrix is computed rather than copied from
// rounded published values.

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

constexpr Mat3 kRgbToXyz = {{{0.4124564, 0.3575761, 0.1804375},
                             {0.2126729, 0.7151522, 0.0721750},
                             {0.0193339, 0.1191920, 0.9503041}}};

Mat3 invert(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

const Mat3& xyz_to_rgb_matrix() {
  static const Mat3 inv = invert(kRgbToXyz);
  return inv;
}

constexpr double kWhite[3] = {0.4124564 + 0.3575761 + 0.1804375,
                              0.2126729 + 0.7151522 + 0.0721750,
                              0.0193339 + 0.1191920 + 0.9503041};

// CIE constants: delta = 6/29.
constexpr double kDelta = 6.0 / 29.0;

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  return c <= 0.04045 / 12.92 ? c * 12.92 : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

void require_rgb(const Image& img, const char* what) {
  if (img.channels() != 3) throw InvalidArgument(std::string(what) + ": expected 3 channels");
}

}  // namespace

Image rgb_to_lab(const Image& rgb) {
  require_rgb(rgb, "rgb_to_lab");
  Image lab(rgb.height(), rgb.width(), 3);
  const auto& src = rgb.values();
  auto& dst = lab.values();
  for (size_t i = 0; i < src.size(); i += 3) {
    const double lin[3] = {srgb_to_linear(src[i]), srgb_to_linear(src[i + 1]),
                           srgb_to_linear(src[i + 2])};
    double f[3];
    for (int r = 0; r < 3; ++r) {
      const double xyz = kRgbToXyz[r][0] * lin[0] + kRgbToXyz[r][1] * lin[1] + kRgbToXyz[r][2] * lin[2];
      f[r] = lab_f(xyz / kWhite[r]);
    }
    dst[i] = 116.0 * f[1] - 16.0;
    dst[i + 1] = 500.0 * (f[0] - f[1]);
    dst[i + 2] = 200.0 * (f[1] - f[2]);
  }
  return lab;
}

Image lab_to_rgb(const Image& lab) {
  require_rgb(lab, "lab_to_rgb");
  const Mat3& m = xyz_to_rgb_matrix();
  Image rgb(lab.height(), lab.width(), 3);
  const auto& src = lab.values();
  auto& dst = rgb.values();
  for (size_t i = 0; i < src.size(); i += 3) {
    const double fy = (src[i] + 16.0) / 116.0;
    const double f[3] = {fy + src[i + 1] / 500.0, fy, fy - src[i + 2] / 200.0};
    double xyz[3];
    for (int r = 0; r < 3; ++r) xyz[r] = kWhite[r] * lab_f_inv(f[r]);
    for (int r = 0; r < 3; ++r)
      dst[i + r] = linear_to_srgb(m[r][0] * xyz[0] + m[r][1] * xyz[1] + m[r][2] * xyz[2]);
  }
  return rgb;
}

Image merge_lab(const Image& luma_lab, const Image& chroma_lab) {
  require_rgb(luma_lab, "merge_lab");
  require_rgb(chroma_lab, "merge_lab");
  if (!luma_lab.same_shape(chroma_lab)) throw InvalidArgument("merge_lab: shape mismatch");
  Image out = chroma_lab;
  for (size_t i = 0; i < out.values().size(); i += 3) out.values()[i] = luma_lab.values()[i];
  return out;
}

Image color_transfer_ab(const Image& luma_source, const Image& chroma_source) {
  require_rgb(luma_source, "color_transfer_ab");
  require_rgb(chroma_source, "color_transfer_ab");
  if (!luma_source.same_shape(chroma_source))
    throw InvalidArgument("color_transfer_ab: shape mismatch");
  return lab_to_rgb(merge_lab(rgb_to_lab(luma_source), rgb_to_lab(chroma_source)));
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

double mse_values(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty()) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace

double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw InvalidArgument("mse: shape mismatch");
  return mse_values(a.values(), b.values());
}

double mse(const Plane& a, const Plane& b) {
  if (!a.same_shape(b)) throw InvalidArgument("mse: shape mismatch");
  return mse_values(a.values(), b.values());
}

double psnr_from_mse(double m, double peak) {
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

double psnr(const Image& a, const Image& b, double peak) {
  if (!a.same_shape(b)) throw InvalidArgument("psnr: shape mismatch");
  return psnr_from_mse(mse(a, b), peak);
}

double psnr(const Plane& a, const Plane& b, double peak) {
  if (!a.same_shape(b)) throw InvalidArgument("psnr: shape mismatch");
  return psnr_from_mse(mse(a, b), peak);
}

double gradient_energy(const Image& img) {
  const int h = img.height(), w = img.width(), ch = img.channels();
  if (h == 0 || w == 0) return 0.0;
  double acc = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const double v = img.at(y, x, c);
        if (x + 1 < w) {
          const double d = img.at(y, x + 1, c) - v;
          acc += d * d;
        }
        if (y + 1 < h) {
          const double d = img.at(y + 1, x, c) - v;
          acc += d * d;
        }
      }
  return acc / (static_cast<double>(h) * w);
}

double gradient_energy(const Plane& p) { return gradient_energy(Image::from_plane(p)); }

// ---------------------------------------------------------------------------
// Netpbm

namespace {

int read_header_int(std::istream& in, const std::string& path) {
  int c = in.peek();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int v = -1;
  if (!(in >> v) || v < 0) throw InvalidArgument("read_pnm: malformed header in " + path);
  return v;
}

}  // namespace

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("read_pnm: cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw InvalidArgument("read_pnm: not a binary PGM/PPM file: " + path);
  const int channels = magic[1] == '5' ? 1 : 3;
  const int width = read_header_int(in, path);
  const int height = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (maxval <= 0 || maxval > 255) throw InvalidArgument("read_pnm: only 8-bit files supported: " + path);
  in.get();  // single whitespace before raster
  std::vector<unsigned char> raw(static_cast<size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size())
    throw InvalidArgument("read_pnm: truncated raster in " + path);
  Image img(height, width, channels);
  for (size_t i = 0; i < raw.size(); ++i) img.values()[i] = raw[i] / static_cast<double>(maxval);
  return img;
}

void write_pnm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("write_pnm: cannot open " + path);
  out << (img.channels() == 1 ? "P5" : "P6") << "\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  for (size_t i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(img.values()[i], 0.0, 1.0) * 255.0));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw InvalidArgument("write_pnm: write failed for " + path);
}

}  // namespace bdeblur

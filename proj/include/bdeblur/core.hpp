#pragma once

// Raster types, color conversion and image metrics shared by every module.

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdeblur {

using cplx = std::complex<double>;

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major 2-D array.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(check(rows) * check(cols)), fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Grid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  T& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool operator==(const Grid&) const = default;

 private:
  static int check(int n) {
    if (n < 0) throw InvalidArgument("Grid: negative dimension");
    return n;
  }
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using Plane = Grid<double>;
using CPlane = Grid<cplx>;

/// H x W x C raster, channel-interleaved, nominal range [0,1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  /// Wraps a single plane as a one-channel image.
  static Image from_plane(const Plane& p);
  static Image from_planes(const std::vector<Plane>& planes);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  size_t size() const { return data_.size(); }
  bool same_shape(const Image& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  double& at(int y, int x, int c) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int y, int x, int c) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  Plane channel(int c) const;
  void set_channel(int c, const Plane& p);
  std::vector<Plane> planes() const;

  /// Luma (Rec. 601 weights) for RGB, identity for grayscale.
  Plane gray() const;

  Image clamped(double lo = 0.0, double hi = 1.0) const;

  bool operator==(const Image&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// sRGB (D65) <-> CIE L*a*b*. Channel 0 = L in [0,100].
Image rgb_to_lab(const Image& rgb);
Image lab_to_rgb(const Image& lab);

/// RGB image whose lightness comes from `luma_source` and whose a,b chroma
/// comes from `chroma_source`. Not clamped.
Image color_transfer_ab(const Image& luma_source, const Image& chroma_source);

/// L from `luma_source`, a,b from `chroma_source`, both in Lab.
Image merge_lab(const Image& luma_lab, const Image& chroma_lab);

inline constexpr double kPsnrCap = 99.0;

double mse(const Image& a, const Image& b);
double mse(const Plane& a, const Plane& b);

/// 10 log10(peak^2 / MSE), capped at kPsnrCap.
double psnr(const Image& a, const Image& b, double peak = 1.0);
double psnr(const Plane& a, const Plane& b, double peak = 1.0);
double psnr_from_mse(double mse, double peak = 1.0);

/// Mean over pixels of squared forward differences in x and y, summed over
/// channels.
double gradient_energy(const Image& img);
double gradient_energy(const Plane& p);

// Binary netpbm I/O, 8-bit. P5 loads as one channel, P6 as three.
Image read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Image& img);

}  // namespace bdeblur

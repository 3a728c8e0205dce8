#include "bdeblur/psf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

namespace bdeblur {

bool is_valid_kernel(const Plane& k, double tol) {
  if (k.empty() || k.rows() != k.cols()) return false;
  double sum = 0.0;
  for (double v : k) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

BlurKernel delta_kernel(int side) {
  if (side <= 0 || side % 2 == 0) throw InvalidArgument("delta_kernel: side must be odd");
  BlurKernel k(side, side);
  k(side / 2, side / 2) = 1.0;
  return k;
}

double matern_cov(double d, const GpConfig& cfg) {
  if (d < 0.0) throw InvalidArgument("matern_cov: negative distance");
  if (cfg.length_scale <= 0.0) throw InvalidArgument("matern_cov: length_scale must be positive");
  const double s = std::numbers::sqrt3 * d / cfg.length_scale;
  return cfg.variance * (1.0 + s) * std::exp(-s);
}

namespace {

// In-place Cholesky of a symmetric positive definite matrix (lower triangle).
bool cholesky(std::vector<double>& a, int n) {
  for (int j = 0; j < n; ++j) {
    double diag = a[static_cast<size_t>(j) * n + j];
    for (int k = 0; k < j; ++k) diag -= a[static_cast<size_t>(j) * n + k] * a[static_cast<size_t>(j) * n + k];
    if (!(diag > 0.0)) return false;
    const double ljj = std::sqrt(diag);
    a[static_cast<size_t>(j) * n + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double v = a[static_cast<size_t>(i) * n + j];
      for (int k = 0; k < j; ++k) v -= a[static_cast<size_t>(i) * n + k] * a[static_cast<size_t>(j) * n + k];
      a[static_cast<size_t>(i) * n + j] = v / ljj;
    }
    for (int k = j + 1; k < n; ++k) a[static_cast<size_t>(j) * n + k] = 0.0;
  }
  return true;
}

}  // namespace

TrajectorySampler::TrajectorySampler(const GpConfig& cfg) : cfg_(cfg) {
  if (cfg.samples < 2) throw InvalidArgument("TrajectorySampler: need at least 2 samples");
  if (cfg.length_scale <= 0.0) throw InvalidArgument("TrajectorySampler: length_scale must be positive");
  if (cfg.variance < 0.0) throw InvalidArgument("TrajectorySampler: variance must be non-negative");
  const int n = cfg.samples;
  if (cfg.variance == 0.0) {
    chol_.assign(static_cast<size_t>(n) * n, 0.0);
    return;
  }
  std::vector<double> cov(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cov[static_cast<size_t>(i) * n + j] = matern_cov(std::abs(i - j) / double(n - 1), cfg);
  double jitter = 1e-10 * cfg.variance;
  for (int attempt = 0; attempt < 4; ++attempt, jitter *= 10.0) {
    chol_ = cov;
    for (int i = 0; i < n; ++i) chol_[static_cast<size_t>(i) * n + i] += jitter;
    if (cholesky(chol_, n)) return;
  }
  throw NumericFailure("TrajectorySampler: covariance not positive definite after jitter");
}

Trajectory TrajectorySampler::sample(std::mt19937_64& rng) const {
  const int n = cfg_.samples;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> zx(n), zy(n);
  for (int i = 0; i < n; ++i) {
    zx[i] = normal(rng);
    zy[i] = normal(rng);
  }
  Trajectory traj(n);
  for (int i = 0; i < n; ++i) {
    const double* row = &chol_[static_cast<size_t>(i) * n];
    double x = 0.0, y = 0.0;
    for (int k = 0; k <= i; ++k) {
      x += row[k] * zx[k];
      y += row[k] * zy[k];
    }
    traj[i] = {x, y};
  }
  return traj;
}

Trajectory center_trajectory(Trajectory t) {
  if (t.empty()) return t;
  Point2 mean;
  for (const auto& p : t) {
    mean.x += p.x;
    mean.y += p.y;
  }
  mean.x /= static_cast<double>(t.size());
  mean.y /= static_cast<double>(t.size());
  for (auto& p : t) {
    p.x -= mean.x;
    p.y -= mean.y;
  }
  return t;
}

Trajectory sample_trajectory(const GpConfig& cfg, std::mt19937_64& rng) {
  return center_trajectory(TrajectorySampler(cfg).sample(rng));
}

BlurKernel rasterize(const Trajectory& traj, int side) {
  if (traj.empty()) throw InvalidArgument("rasterize: empty trajectory");
  if (side <= 0 || side % 2 == 0) throw InvalidArgument("rasterize: side must be odd");
  for (const auto& p : traj)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw InvalidArgument("rasterize: non-finite trajectory sample");

  const double limit = std::max(0.0, (side - 1) / 2.0 - 1.0);
  double extent = 0.0;
  for (const auto& p : traj) extent = std::max({extent, std::abs(p.x), std::abs(p.y)});
  const double scale = extent > limit ? (extent > 0.0 ? limit / extent : 0.0) : 1.0;

  BlurKernel k(side, side);
  const double center = (side - 1) / 2.0;
  const double mass = 1.0 / static_cast<double>(traj.size());
  for (const auto& p : traj) {
    const double col = center + scale * p.x;
    const double row = center + scale * p.y;
    const int c0 = std::clamp(static_cast<int>(std::floor(col)), 0, side - 1);
    const int r0 = std::clamp(static_cast<int>(std::floor(row)), 0, side - 1);
    const double fc = col - c0, fr = row - r0;
    const int c1 = std::min(c0 + 1, side - 1), r1 = std::min(r0 + 1, side - 1);
    k(r0, c0) += mass * (1.0 - fr) * (1.0 - fc);
    k(r0, c1) += mass * (1.0 - fr) * fc;
    k(r1, c0) += mass * fr * (1.0 - fc);
    k(r1, c1) += mass * fr * fc;
  }
  const double total = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= total;
  return k;
}

std::vector<Trajectory> split_fragments(const Trajectory& traj, int fragments) {
  const int t = static_cast<int>(traj.size());
  if (fragments < 1) throw InvalidArgument("split_trajectory: fragments must be positive");
  if (fragments > t) throw InvalidArgument("split_trajectory: more fragments than samples");
  const int base = t / fragments, extra = t % fragments;
  std::vector<Trajectory> out;
  int start = 0;
  for (int f = 0; f < fragments; ++f) {
    const int len = base + (f < extra ? 1 : 0);
    out.emplace_back(traj.begin() + start, traj.begin() + start + len);
    start += len;
  }
  return out;
}

std::vector<BlurKernel> split_trajectory(const Trajectory& traj, int fragments, int side) {
  std::vector<BlurKernel> out;
  for (const auto& piece : split_fragments(traj, fragments))
    out.push_back(rasterize(center_trajectory(piece), side));
  return out;
}

namespace {

double bartlett_hann(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return 0.62 - 0.48 * std::abs(t - 0.5) - 0.38 * std::cos(2.0 * std::numbers::pi * t);
}

}  // namespace

std::vector<std::vector<double>> eff_axis_windows(int length, int regions) {
  if (regions < 1 || length < 1) throw InvalidArgument("eff_axis_windows: invalid grid");
  std::vector<std::vector<double>> w(regions, std::vector<double>(length, 1.0));
  if (regions == 1) return w;
  const double step = (length - 1) / static_cast<double>(regions - 1);
  if (step <= 0.0) throw InvalidArgument("eff_axis_windows: more regions than samples");
  for (int g = 0; g < regions; ++g) {
    const double start = g * step - step;
    for (int x = 0; x < length; ++x) w[g][x] = bartlett_hann((x - start) / (2.0 * step));
  }
  for (int x = 0; x < length; ++x) {
    double sum = 0.0;
    for (int g = 0; g < regions; ++g) sum += w[g][x];
    for (int g = 0; g < regions; ++g) w[g][x] /= sum;
  }
  return w;
}

Plane eff_blur(const Plane& img, const std::vector<BlurKernel>& kernels, int grid_rows,
               int grid_cols) {
  if (grid_rows < 1 || grid_cols < 1 ||
      kernels.size() != static_cast<size_t>(grid_rows) * grid_cols)
    throw InvalidArgument("eff_blur: kernel count does not match grid");
  const auto wy = eff_axis_windows(img.rows(), grid_rows);
  const auto wx = eff_axis_windows(img.cols(), grid_cols);
  Plane num(img.rows(), img.cols());
  Plane den(img.rows(), img.cols());
  for (int gr = 0; gr < grid_rows; ++gr)
    for (int gc = 0; gc < grid_cols; ++gc) {
      Plane window(img.rows(), img.cols());
      Plane masked(img.rows(), img.cols());
      for (int r = 0; r < img.rows(); ++r)
        for (int c = 0; c < img.cols(); ++c) {
          window(r, c) = wy[gr][r] * wx[gc][c];
          masked(r, c) = window(r, c) * img(r, c);
        }
      const BlurKernel& k = kernels[static_cast<size_t>(gr) * grid_cols + gc];
      const Plane blurred = fft_convolve(masked, k, Boundary::reflect);
      const Plane mass = fft_convolve(window, k, Boundary::reflect);
      for (size_t i = 0; i < num.size(); ++i) {
        num.values()[i] += blurred.values()[i];
        den.values()[i] += mass.values()[i];
      }
    }
  for (size_t i = 0; i < num.size(); ++i) num.values()[i] /= den.values()[i];
  return num;
}

Image eff_blur(const Image& img, const std::vector<BlurKernel>& kernels, int grid_rows,
               int grid_cols) {
  Image out(img.height(), img.width(), img.channels());
  for (int c = 0; c < img.channels(); ++c)
    out.set_channel(c, eff_blur(img.channel(c), kernels, grid_rows, grid_cols));
  return out;
}

void write_kernel(const std::string& path, const BlurKernel& k) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("write_kernel: cannot open " + path);
  out << k.rows() << "\n" << std::setprecision(17);
  for (int r = 0; r < k.rows(); ++r) {
    for (int c = 0; c < k.cols(); ++c) out << (c ? " " : "") << k(r, c);
    out << "\n";
  }
}

BlurKernel read_kernel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("read_kernel: cannot open " + path);
  int side = 0;
  if (!(in >> side) || side <= 0) throw InvalidArgument("read_kernel: bad size line in " + path);
  BlurKernel k(side, side);
  for (auto& v : k)
    if (!(in >> v)) throw InvalidArgument("read_kernel: truncated kernel in " + path);
  return k;
}

}  // namespace bdeblur

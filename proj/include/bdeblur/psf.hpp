#pragma once

// Synthetic camera-shake PSFs: a Matérn (nu = 3/2) Gaussian process draws the
// x and y motion over the exposure, the path is splatted onto a kernel grid,
// and spatially varying blur is applied with Efficient Filter Flow.

#include <random>
#include <string>
#include <vector>

#include "bdeblur/core.hpp"
#include "bdeblur/fourier.hpp"

namespace bdeblur {

/// K x K non-negative weights summing to one. Held as a plain Plane; use
/// is_valid_kernel() to check the invariants.
using BlurKernel = Plane;

bool is_valid_kernel(const Plane& k, double tol = 1e-9);
BlurKernel delta_kernel(int side);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Image-plane camera path sampled uniformly over t in [0,1].
using Trajectory = std::vector<Point2>;

struct GpConfig {
  double length_scale = 0.3;  // in units of the exposure interval
  double variance = 4.0;      // pixels^2
  int samples = 250;
};

/// Matérn nu = 3/2: variance * (1 + sqrt(3) d / l) * exp(-sqrt(3) d / l).
double matern_cov(double d, const GpConfig& cfg);

/// Draws trajectories from a fixed GP; the Cholesky factor of the T x T
/// covariance is computed once at construction.
class TrajectorySampler {
 public:
  explicit TrajectorySampler(const GpConfig& cfg);

  /// Two independent GP draws (x and y), as drawn (not centered).
  Trajectory sample(std::mt19937_64& rng) const;
  const GpConfig& config() const { return cfg_; }

 private:
  GpConfig cfg_;
  std::vector<double> chol_;  // lower triangle, row-major T x T
};

Trajectory center_trajectory(Trajectory t);

/// One GP draw shifted so that its centroid is the origin.
Trajectory sample_trajectory(const GpConfig& cfg, std::mt19937_64& rng);

/// Splats each sample bilinearly with weight 1/T onto a side x side grid
/// centered on the kernel center. Paths reaching past (side-1)/2 - 1 pixels
/// are shrunk isotropically to fit.
BlurKernel rasterize(const Trajectory& traj, int side);

/// Contiguous pieces of near-equal length; the first T % fragments pieces
/// get the extra sample.
std::vector<Trajectory> split_fragments(const Trajectory& traj, int fragments);

/// Splits into fragments, re-centers each and rasterizes at `side`.
std::vector<BlurKernel> split_trajectory(const Trajectory& traj, int fragments, int side = 17);

/// Per-axis Bartlett-Hann windows for `regions` half-overlapping regions over
/// `length` samples, normalized to sum to one at every sample.
std::vector<std::vector<double>> eff_axis_windows(int length, int regions);

/// Efficient Filter Flow blur with a grid_rows x grid_cols grid of kernels
/// (row-major). Each region is masked by its window, convolved with its kernel
/// (reflect boundary) and the results are summed; the sum is divided by the
/// equally blurred window mass so that constant images pass unchanged.
Plane eff_blur(const Plane& img, const std::vector<BlurKernel>& kernels, int grid_rows,
               int grid_cols);
Image eff_blur(const Image& img, const std::vector<BlurKernel>& kernels, int grid_rows,
               int grid_cols);

// Plain-text kernel file: first line K, then K rows of K values.
void write_kernel(const std::string& path, const BlurKernel& k);
BlurKernel read_kernel(const std::string& path);

}  // namespace bdeblur

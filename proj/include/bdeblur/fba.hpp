#pragma once

// Fourier Burst Accumulation.
//
// Vanilla FBA fuses a registered burst by a per-frequency weighted average of
// the frames' Fourier coefficients, w_i = |a_i|^p / sum_j |a_j|^p. The
// learnable variant replaces the fixed weighting with a small network shared
// over frequencies: log normalized magnitudes -> dense N->N -> floored ReLU ->
// dense N->N -> softmax over frames. With w1 = I, w2 = p I and zero biases the
// softmax reproduces the vanilla weights for exponent p; the identity init is
// the magnitude-proportional case p = 1.
//
// All spectra here are centered (see fourier.hpp) and may be rectangular.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bdeblur/core.hpp"
#include "bdeblur/nn.hpp"

namespace bdeblur {

/// One non-negative weight per frame per frequency; frame-major storage.
struct WeightField {
  int frames = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> w;

  WeightField() = default;
  WeightField(int n, int r, int c, double fill = 0.0)
      : frames(n), rows(r), cols(c), w(static_cast<size_t>(n) * r * c, fill) {}

  size_t plane_size() const { return static_cast<size_t>(rows) * cols; }
  double& at(int f, size_t pos) { return w[f * plane_size() + pos]; }
  double at(int f, size_t pos) const { return w[f * plane_size() + pos]; }
};

/// Largest deviation of a per-frequency frame sum from 1 (inf if any weight
/// is negative or non-finite).
double weight_sum_error(const WeightField& w);

struct FbaConfig {
  double p = 11.0;
  double smoothing_sigma = 2.0;  // frequency bins; 0 disables
};

WeightField fba_weights(std::span<const CPlane> spectra, double p);

/// Gaussian-smooths each frame's weight plane (truncated at 3 sigma, reflect
/// boundary) and renormalizes per frequency.
WeightField smooth_weights(const WeightField& w, double sigma);

/// Weighted sum of the spectra, still in the frequency domain.
CPlane fba_fuse_spectrum(std::span<const CPlane> spectra, const WeightField& w);
/// Real part of the inverse transform of fba_fuse_spectrum.
Plane fba_fuse(std::span<const CPlane> spectra, const WeightField& w);

/// Vanilla FBA of spatial frames: DFT, weights, optional smoothing, fusion.
Plane fba_fuse_frames(std::span<const Plane> frames, const FbaConfig& cfg);

// Learnable FBA -------------------------------------------------------------

inline constexpr const char* kFbaPrefix = "fba";
// Activation floor of the weighting MLP, below every log-magnitude input.
inline constexpr double kFbaFloor = -100.0;

void add_fba_params(ModelParams& params, size_t burst);
/// w1 = I + N(0, noise_std^2), w2 = I, zero biases.
void init_fba_params(ModelParams& params, std::mt19937_64& rng, double noise_std = 1e-2);

struct LearnableFbaCache {
  int frames = 0;
  int rows = 0;
  int cols = 0;
  bool smoothed = false;
  uint64_t param_hash = 0;
  std::vector<CPlane> spectra;
  std::vector<double> magnitude;  // positions x frames
  std::vector<double> norm_sum;   // per position: sum of magnitudes + eps
  std::vector<double> weights;    // positions x frames, softmax output
  BurstMlpCache mlp;
};

struct LearnableFbaResult {
  CPlane fused_spectrum;
  Plane fused;
  WeightField weights;
};

/// Fused patch. With smoothing_sigma > 0 the softmax weights are smoothed
/// before fusion (inference only; such a cache cannot be back-propagated).
LearnableFbaResult learnable_fba_forward(std::span<const CPlane> spectra, const ModelParams& params,
                                         LearnableFbaCache* cache = nullptr,
                                         double smoothing_sigma = 0.0);

/// Gradient of the loss with respect to each input spectrum, using the
/// convention g = dL/dRe + i dL/dIm. Parameter gradients are accumulated into
/// `grads`.
std::vector<CPlane> learnable_fba_backward(const ModelParams& params,
                                           const LearnableFbaCache& cache, const Plane& grad_out,
                                           ModelParams& grads);

/// Hash of the FBA parameter values; used to detect stale caches.
uint64_t fba_param_hash(const ModelParams& params);

}  // namespace bdeblur

#pragma once

// Per-frame learned Wiener deconvolution followed by learnable FBA fusion.
//
//   65x65 patch --dft--> bands b1 (17x17 crop), b2 (33x33 crop), b3 (65x65),
//                        b4 (|u|,|v| <= 4 of b3)
//   bands of all N frames --burst MLP per band--> adjusted bands
//   [b1'|b2'] -> dense+ReLU -> M     [b3'|b4'] -> dense+ReLU -> M
//   [2M] -> dense+ReLU -> T -> dense+ReLU -> T -> dense -> 2113 half-plane gains
//   gains (mirrored to 65x65) * dft(patch) --idft, center crop--> 33x33 estimate
//   N estimates --learnable FBA--> fused 33x33 patch
//
// Standard widths are M = 2048 and T = 4096; NetConfig::width_scale shrinks
// both for desk-scale training.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bdeblur/core.hpp"
#include "bdeblur/fba.hpp"
#include "bdeblur/fourier.hpp"
#include "bdeblur/nn.hpp"

namespace bdeblur {

inline constexpr int kPatchSide = 65;
inline constexpr int kOutputSide = 33;
inline constexpr int kBandSides[3] = {17, 33, 65};
inline constexpr int kLowpassRadius = 4;
inline constexpr int kStandardBurst = 14;
inline constexpr size_t kBandFeatures[4] = {2 * 145, 2 * 545, 2 * 2113, 2 * 81};
inline constexpr size_t kGainCount = 2113;  // non-redundant half of 65 x 65

// Activation floor of the band-sharing MLPs. Band features of [0,1] patches
// stay well above it (|feature| <= 65), so identity-initialized MLPs pass the
// bands through unchanged.
inline constexpr double kShareFloor = -100.0;

using Burst = std::vector<Plane>;

struct NetConfig {
  int burst = kStandardBurst;
  double width_scale = 1.0;

  size_t merge_width() const;
  size_t trunk_width() const;
};

struct LayerShape {
  std::string name;
  size_t in;
  size_t out;
};

/// Dense layers of the gain predictor, input to output.
std::vector<LayerShape> layer_table(const NetConfig& cfg);

/// Adds (zeroed) deconvolution and FBA tensors for `cfg`.
void add_model_params(ModelParams& params, const NetConfig& cfg);
/// Fresh model: Xavier trunk, identity band/FBA MLPs, head = all-ones gains.
ModelParams make_model(const NetConfig& cfg, uint64_t seed);
/// Recovers burst size and widths from tensor shapes.
NetConfig infer_config(const ModelParams& params);

// Stages --------------------------------------------------------------------

struct BandSet {
  std::array<std::vector<double>, 4> bands;  // real parts then imaginary parts
  Spectrum spectrum;                          // full 65 x 65 spectrum (b3)
};

BandSet extract_bands(const Plane& patch);

/// Adjusted bands for every frame of one burst.
std::vector<std::array<std::vector<double>, 4>> band_share(
    const std::vector<std::array<std::vector<double>, 4>>& bands, const ModelParams& params);

/// The head output o is mapped to gains 1 + s(f) (o - 1) with a fixed radial
/// profile s(f) = (|f| + offset) / (|f| + knee). Curvature of the loss along a
/// gain grows with the signal power at that frequency, which is concentrated
/// at DC and the lowest frequencies; s(f) evens this out for plain SGD.
inline constexpr double kGainScaleOffset = 0.25;
inline constexpr double kGainScaleKnee = 8.0;
const std::vector<double>& gain_scale();  // kGainCount values, half-plane order

/// 65 x 65 symmetric gain grid from the 2113 half-plane values.
Plane mirror_gains(std::span<const double> half);
/// Gains for one frame from its adjusted bands.
Plane predict_gains(const std::array<std::vector<double>, 4>& adjusted, const ModelParams& params);

/// Center 33 x 33 crop of idft(gains * dft(patch)).
Plane apply_wiener(const Plane& patch, const Plane& gains);
Plane apply_wiener(const Spectrum& spectrum, const Plane& gains);

struct WienerGrads {
  Plane patch;  // 65 x 65
  Plane gains;  // 65 x 65, every entry treated as independent
};
WienerGrads apply_wiener_backward(const Plane& patch, const Plane& gains, const Plane& grad_out);

// Batched deconvolution -------------------------------------------------------

struct DeconvCache {
  size_t bursts = 0;
  size_t frames = 0;  // per burst
  std::vector<Spectrum> spectra;                        // one per row
  std::array<std::vector<BurstMlpCache>, 4> share;      // [band][burst]
  std::vector<double> in12, in34;                       // rows x features
  std::vector<double> pre12, pre34, enc, pre1, h1, pre2, h2;
  std::vector<double> gains_half;                       // rows x 2113
};

/// Per-frame 33 x 33 estimates for each burst.
std::vector<Burst> deconv_forward(const ModelParams& params, std::span<const Burst> bursts,
                                  DeconvCache* cache = nullptr);

/// Accumulates parameter gradients; fills input gradients when requested.
void deconv_backward(const ModelParams& params, const DeconvCache& cache,
                     std::span<const Burst> grad_estimates, ModelParams& grads,
                     std::vector<Burst>* input_grads = nullptr);

// Full network ------------------------------------------------------------------

struct NetCache {
  DeconvCache deconv;
  std::vector<LearnableFbaCache> fba;
};

/// One fused 33 x 33 patch per burst. smoothing_sigma > 0 smooths the fusion
/// weights (inference only).
std::vector<Plane> net_forward(const ModelParams& params, std::span<const Burst> bursts,
                               NetCache* cache = nullptr, double smoothing_sigma = 0.0);

void net_backward(const ModelParams& params, const NetCache& cache,
                  std::span<const Plane> grad_out, ModelParams& grads,
                  std::vector<Burst>* input_grads = nullptr);

}  // namespace bdeblur

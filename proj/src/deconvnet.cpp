#include "bdeblur/deconvnet.hpp"

#include <algorithm>
#include <cmath>

#include "bdeblur/simd.hpp"

namespace bdeblur {

namespace {

const std::string kShare[4] = {"share.b1", "share.b2", "share.b3", "share.b4"};
constexpr size_t kIn12 = kBandFeatures[0] + kBandFeatures[1];
constexpr size_t kIn34 = kBandFeatures[2] + kBandFeatures[3];

size_t scaled(double base, double s) {
  return std::max<size_t>(1, static_cast<size_t>(std::llround(base * s)));
}

// Real parts followed by imaginary parts.
void split_complex(std::span<const cplx> z, double* out) {
  const size_t n = z.size();
  for (size_t i = 0; i < n; ++i) {
    out[i] = z[i].real();
    out[n + i] = z[i].imag();
  }
}

// Position in the centered 65x65 grid of each half-plane gain, and of its mirror.
struct GainIndex {
  std::vector<size_t> pos;
  std::vector<size_t> mirror;
};

const GainIndex& gain_index() {
  static const GainIndex idx = [] {
    GainIndex g;
    const int h = kPatchSide / 2;
    for (const auto& f : half_order(kPatchSide)) {
      g.pos.push_back(static_cast<size_t>(f.u + h) * kPatchSide + (f.v + h));
      g.mirror.push_back(static_cast<size_t>(-f.u + h) * kPatchSide + (-f.v + h));
    }
    return g;
  }();
  return idx;
}

// Linear index of the b4 low-pass coefficients inside the 65x65 grid.
const std::vector<size_t>& lowpass_index() {
  static const std::vector<size_t> idx = [] {
    std::vector<size_t> out;
    const int h = kPatchSide / 2;
    for (int u = -kLowpassRadius; u <= kLowpassRadius; ++u)
      for (int v = -kLowpassRadius; v <= kLowpassRadius; ++v)
        out.push_back(static_cast<size_t>(u + h) * kPatchSide + (v + h));
    return out;
  }();
  return idx;
}

Plane real_part(const CPlane& z) {
  Plane out(z.rows(), z.cols());
  for (size_t i = 0; i < z.size(); ++i) out.values()[i] = z.values()[i].real();
  return out;
}

// Adjoint of "real/imag features of the half spectrum of a side x side DFT":
// returns the gradient on the spatial (real) input.
Plane half_features_adjoint(const double* g, int side) {
  const auto& order = half_order(side);
  const size_t n = order.size();
  CPlane gs(side, side);
  for (size_t i = 0; i < n; ++i) at_freq(gs, order[i].u, order[i].v) += cplx(g[i], g[n + i]);
  return real_part(idft2_rect(gs));
}

void check_bursts(std::span<const Burst> bursts, size_t frames) {
  if (bursts.empty()) throw InvalidArgument("deconv_forward: no bursts");
  for (const auto& b : bursts) {
    if (b.size() != frames)
      throw InvalidArgument("deconv_forward: burst size does not match the network configuration");
    for (const auto& p : b)
      if (p.rows() != kPatchSide || p.cols() != kPatchSide)
        throw InvalidArgument("deconv_forward: patches must be 65x65");
  }
}

}  // namespace

const std::vector<double>& gain_scale() {
  static const std::vector<double> scale = [] {
    std::vector<double> s;
    for (const auto& f : half_order(kPatchSide)) {
      const double r = std::hypot(f.u, f.v);
      s.push_back((r + kGainScaleOffset) / (r + kGainScaleKnee));
    }
    return s;
  }();
  return scale;
}

size_t NetConfig::merge_width() const { return scaled(2048.0, width_scale); }
size_t NetConfig::trunk_width() const { return scaled(4096.0, width_scale); }

std::vector<LayerShape> layer_table(const NetConfig& cfg) {
  const size_t m = cfg.merge_width(), t = cfg.trunk_width();
  return {{"merge12", kIn12, m}, {"merge34", kIn34, m}, {"fc1", 2 * m, t},
          {"fc2", t, t},         {"head", t, kGainCount}};
}

void add_model_params(ModelParams& params, const NetConfig& cfg) {
  if (cfg.burst < 1) throw InvalidArgument("add_model_params: burst must be positive");
  if (!(cfg.width_scale > 0.0 && cfg.width_scale <= 1.0))
    throw InvalidArgument("add_model_params: width_scale must lie in (0,1]");
  for (const auto& name : kShare) add_burst_mlp(params, name, static_cast<size_t>(cfg.burst));
  for (const auto& layer : layer_table(cfg)) {
    params.add(layer.name + ".w", {layer.out, layer.in});
    params.add(layer.name + ".b", {layer.out});
  }
  add_fba_params(params, static_cast<size_t>(cfg.burst));
}

ModelParams make_model(const NetConfig& cfg, uint64_t seed) {
  ModelParams params;
  add_model_params(params, cfg);
  std::mt19937_64 rng(seed);
  for (const auto& name : kShare) init_burst_mlp_identity(params, name, 1e-2, rng);
  for (const auto& layer : layer_table(cfg)) {
    if (layer.name == "head") {
      fill(params.get("head.b"), 1.0);
    } else {
      init_xavier(params.get(layer.name + ".w"), rng);
    }
  }
  init_fba_params(params, rng);
  return params;
}

NetConfig infer_config(const ModelParams& params) {
  NetConfig cfg;
  cfg.burst = static_cast<int>(params.get("share.b1.w1").dim(0));
  const size_t m = params.get("merge12.w").dim(0);
  cfg.width_scale = static_cast<double>(m) / 2048.0;
  ModelParams expected;
  add_model_params(expected, cfg);
  if (!expected.same_layout(params))
    throw InvalidArgument("infer_config: parameter shapes do not match any network configuration");
  return cfg;
}

// Stages ----------------------------------------------------------------------------

BandSet extract_bands(const Plane& patch) {
  if (patch.rows() != kPatchSide || patch.cols() != kPatchSide)
    throw InvalidArgument("extract_bands: patch must be 65x65");
  BandSet set;
  set.spectrum = dft2(patch);
  for (int b = 0; b < 3; ++b) {
    const int side = kBandSides[b];
    const std::vector<cplx> half =
        side == kPatchSide ? compact_half(set.spectrum) : compact_half(dft2(crop_center(patch, side)));
    set.bands[b].resize(2 * half.size());
    split_complex(half, set.bands[b].data());
  }
  const auto& lp = lowpass_index();
  std::vector<cplx> low(lp.size());
  for (size_t i = 0; i < lp.size(); ++i) low[i] = set.spectrum.values()[lp[i]];
  set.bands[3].resize(2 * low.size());
  split_complex(low, set.bands[3].data());
  return set;
}

std::vector<std::array<std::vector<double>, 4>> band_share(
    const std::vector<std::array<std::vector<double>, 4>>& bands, const ModelParams& params) {
  const size_t n = bands.size();
  if (n == 0 || params.get("share.b1.w1").dim(0) != n)
    throw InvalidArgument("band_share: burst size does not match parameters");
  std::vector<std::array<std::vector<double>, 4>> out(n);
  for (int k = 0; k < 4; ++k) {
    const size_t len = kBandFeatures[k];
    std::vector<double> x(len * n);
    for (size_t t = 0; t < n; ++t) {
      if (bands[t][k].size() != len) throw InvalidArgument("band_share: wrong band length");
      for (size_t f = 0; f < len; ++f) x[f * n + t] = bands[t][k][f];
    }
    const auto y = burst_mlp_forward(params, kShare[k], x, len, nullptr, kShareFloor);
    for (size_t t = 0; t < n; ++t) {
      out[t][k].resize(len);
      for (size_t f = 0; f < len; ++f) out[t][k][f] = y[f * n + t];
    }
  }
  return out;
}

Plane mirror_gains(std::span<const double> half) {
  if (half.size() != kGainCount) throw InvalidArgument("mirror_gains: expected 2113 values");
  const auto& idx = gain_index();
  Plane g(kPatchSide, kPatchSide);
  for (size_t i = 0; i < kGainCount; ++i) {
    g.values()[idx.pos[i]] = half[i];
    g.values()[idx.mirror[i]] = half[i];
  }
  return g;
}

namespace {

// Trunk forward for a batch of rows; fills the cache vectors.
void trunk_forward(const ModelParams& params, size_t rows, DeconvCache& c) {
  const size_t m = params.get("merge12.w").dim(0), t = params.get("fc1.w").dim(0);
  c.pre12.assign(rows * m, 0.0);
  c.pre34.assign(rows * m, 0.0);
  dense_forward({c.in12.data(), rows, kIn12, kIn12}, params.get("merge12.w"), params.get("merge12.b"),
                {c.pre12.data(), rows, m, m});
  dense_forward({c.in34.data(), rows, kIn34, kIn34}, params.get("merge34.w"), params.get("merge34.b"),
                {c.pre34.data(), rows, m, m});
  c.enc.assign(rows * 2 * m, 0.0);
  for (size_t r = 0; r < rows; ++r) {
    double* e = &c.enc[r * 2 * m];
    for (size_t j = 0; j < m; ++j) {
      e[j] = std::max(0.0, c.pre12[r * m + j]);
      e[m + j] = std::max(0.0, c.pre34[r * m + j]);
    }
  }
  c.pre1.assign(rows * t, 0.0);
  dense_forward({c.enc.data(), rows, 2 * m, 2 * m}, params.get("fc1.w"), params.get("fc1.b"),
                {c.pre1.data(), rows, t, t});
  c.h1 = c.pre1;
  relu_inplace(c.h1);
  c.pre2.assign(rows * t, 0.0);
  dense_forward({c.h1.data(), rows, t, t}, params.get("fc2.w"), params.get("fc2.b"),
                {c.pre2.data(), rows, t, t});
  c.h2 = c.pre2;
  relu_inplace(c.h2);
  c.gains_half.assign(rows * kGainCount, 0.0);
  dense_forward({c.h2.data(), rows, t, t}, params.get("head.w"), params.get("head.b"),
                {c.gains_half.data(), rows, kGainCount, kGainCount});
  const auto& s = gain_scale();
  for (size_t r = 0; r < rows; ++r) {
    double* g = &c.gains_half[r * kGainCount];
    for (size_t i = 0; i < kGainCount; ++i) g[i] = 1.0 + s[i] * (g[i] - 1.0);
  }
}

}  // namespace

Plane predict_gains(const std::array<std::vector<double>, 4>& adjusted, const ModelParams& params) {
  for (int k = 0; k < 4; ++k)
    if (adjusted[k].size() != kBandFeatures[k]) throw InvalidArgument("predict_gains: wrong band length");
  DeconvCache c;
  c.in12.insert(c.in12.end(), adjusted[0].begin(), adjusted[0].end());
  c.in12.insert(c.in12.end(), adjusted[1].begin(), adjusted[1].end());
  c.in34.insert(c.in34.end(), adjusted[2].begin(), adjusted[2].end());
  c.in34.insert(c.in34.end(), adjusted[3].begin(), adjusted[3].end());
  trunk_forward(params, 1, c);
  return mirror_gains(c.gains_half);
}

Plane apply_wiener(const Spectrum& spectrum, const Plane& gains) {
  if (spectrum.rows() != kPatchSide || spectrum.cols() != kPatchSide || gains.rows() != kPatchSide ||
      gains.cols() != kPatchSide)
    throw InvalidArgument("apply_wiener: expected 65x65 spectrum and gains");
  CPlane filtered(kPatchSide, kPatchSide);
  simd::scale_complex(gains.data(), spectrum.data(), filtered.data(), filtered.size());
  return crop_center(real_part(idft2_rect(filtered)), kOutputSide);
}

Plane apply_wiener(const Plane& patch, const Plane& gains) { return apply_wiener(dft2(patch), gains); }

WienerGrads apply_wiener_backward(const Plane& patch, const Plane& gains, const Plane& grad_out) {
  if (grad_out.rows() != kOutputSide || grad_out.cols() != kOutputSide)
    throw InvalidArgument("apply_wiener_backward: gradient must be 33x33");
  const Spectrum s = dft2(patch);
  if (!gains.same_shape(patch)) throw InvalidArgument("apply_wiener_backward: expected 65x65 gains");
  const CPlane g_z = dft2_rect(pad_center(grad_out, kPatchSide));
  WienerGrads g;
  g.gains = Plane(kPatchSide, kPatchSide);
  CPlane g_s(kPatchSide, kPatchSide);
  for (size_t i = 0; i < g_z.size(); ++i) {
    g.gains.values()[i] = (std::conj(s.values()[i]) * g_z.values()[i]).real();
    g_s.values()[i] = gains.values()[i] * g_z.values()[i];
  }
  g.patch = real_part(idft2_rect(g_s));
  return g;
}

// Batched deconvolution ---------------------------------------------------------------

std::vector<Burst> deconv_forward(const ModelParams& params, std::span<const Burst> bursts,
                                  DeconvCache* cache) {
  const size_t n = params.get("share.b1.w1").dim(0);
  check_bursts(bursts, n);
  const size_t nb = bursts.size(), rows = nb * n;

  DeconvCache local;
  DeconvCache& c = cache ? *cache : local;
  c.bursts = nb;
  c.frames = n;
  c.spectra.assign(rows, Spectrum());
  std::array<std::vector<double>, 4> feats;
  for (int k = 0; k < 4; ++k) feats[k].assign(rows * kBandFeatures[k], 0.0);
  for (size_t r = 0; r < rows; ++r) {
    BandSet set = extract_bands(bursts[r / n][r % n]);
    for (int k = 0; k < 4; ++k) std::copy(set.bands[k].begin(), set.bands[k].end(), &feats[k][r * kBandFeatures[k]]);
    c.spectra[r] = std::move(set.spectrum);
  }

  // Band sharing: per band and burst, an L x N matrix of coefficient vectors.
  c.in12.assign(rows * kIn12, 0.0);
  c.in34.assign(rows * kIn34, 0.0);
  for (int k = 0; k < 4; ++k) {
    const size_t len = kBandFeatures[k];
    c.share[k].assign(nb, BurstMlpCache());
    const size_t width = k < 2 ? kIn12 : kIn34;
    const size_t offset = (k == 1) ? kBandFeatures[0] : (k == 3 ? kBandFeatures[2] : 0);
    std::vector<double>& dst = k < 2 ? c.in12 : c.in34;
    std::vector<double> x(len * n);
    for (size_t b = 0; b < nb; ++b) {
      for (size_t t = 0; t < n; ++t) {
        const double* src = &feats[k][(b * n + t) * len];
        for (size_t f = 0; f < len; ++f) x[f * n + t] = src[f];
      }
      const auto y = burst_mlp_forward(params, kShare[k], x, len, &c.share[k][b], kShareFloor);
      for (size_t t = 0; t < n; ++t) {
        double* out = &dst[(b * n + t) * width + offset];
        for (size_t f = 0; f < len; ++f) out[f] = y[f * n + t];
      }
    }
  }

  trunk_forward(params, rows, c);

  std::vector<Burst> estimates(nb, Burst(n));
  for (size_t r = 0; r < rows; ++r) {
    const Plane gains = mirror_gains({&c.gains_half[r * kGainCount], kGainCount});
    estimates[r / n][r % n] = apply_wiener(c.spectra[r], gains);
  }
  return estimates;
}

void deconv_backward(const ModelParams& params, const DeconvCache& c,
                     std::span<const Burst> grad_estimates, ModelParams& grads,
                     std::vector<Burst>* input_grads) {
  const size_t n = c.frames, nb = c.bursts, rows = nb * n;
  if (rows == 0 || c.spectra.size() != rows) throw InvalidArgument("deconv_backward: empty cache");
  if (grad_estimates.size() != nb) throw InvalidArgument("deconv_backward: burst count mismatch");
  const size_t m = params.get("merge12.w").dim(0), t = params.get("fc1.w").dim(0);
  if (c.pre12.size() != rows * m || c.pre1.size() != rows * t)
    throw InvalidArgument("deconv_backward: cache does not match parameters");

  const auto& gidx = gain_index();
  std::vector<double> g_half(rows * kGainCount, 0.0);
  std::vector<CPlane> g_spec(input_grads ? rows : 0);
  for (size_t r = 0; r < rows; ++r) {
    const Plane& g_est = grad_estimates[r / n].at(r % n);
    if (g_est.rows() != kOutputSide || g_est.cols() != kOutputSide)
      throw InvalidArgument("deconv_backward: gradients must be 33x33");
    // x = crop(Re(idft(G * S)))  =>  dL/dZ = dft(pad(g)).
    const CPlane g_z = dft2_rect(pad_center(g_est, kPatchSide));
    const cplx* s = c.spectra[r].data();
    double* gh = &g_half[r * kGainCount];
    for (size_t i = 0; i < kGainCount; ++i) {
      const size_t p = gidx.pos[i], q = gidx.mirror[i];
      const cplx gp = g_z.values()[p];
      double acc = s[p].real() * gp.real() + s[p].imag() * gp.imag();
      if (q != p) {
        const cplx gq = g_z.values()[q];
        acc += s[q].real() * gq.real() + s[q].imag() * gq.imag();
      }
      gh[i] = acc;
    }
    if (input_grads) {
      const Plane gains = mirror_gains({&c.gains_half[r * kGainCount], kGainCount});
      g_spec[r] = CPlane(kPatchSide, kPatchSide);
      simd::scale_complex(gains.data(), g_z.data(), g_spec[r].data(), g_spec[r].size());
    }
  }

  // Trunk.
  const auto& scale = gain_scale();
  for (size_t r = 0; r < rows; ++r)
    for (size_t i = 0; i < kGainCount; ++i) g_half[r * kGainCount + i] *= scale[i];
  std::vector<double> g_h2(rows * t), g_h1(rows * t), g_enc(rows * 2 * m);
  simd::Mat gm_h2{g_h2.data(), rows, t, t};
  dense_backward({c.h2.data(), rows, t, t}, params.get("head.w"), {g_half.data(), rows, kGainCount, kGainCount},
                 grads.get("head.w"), grads.get("head.b"), &gm_h2);
  relu_backward_inplace(c.pre2, g_h2);
  simd::Mat gm_h1{g_h1.data(), rows, t, t};
  dense_backward({c.h1.data(), rows, t, t}, params.get("fc2.w"), {g_h2.data(), rows, t, t},
                 grads.get("fc2.w"), grads.get("fc2.b"), &gm_h1);
  relu_backward_inplace(c.pre1, g_h1);
  simd::Mat gm_enc{g_enc.data(), rows, 2 * m, 2 * m};
  dense_backward({c.enc.data(), rows, 2 * m, 2 * m}, params.get("fc1.w"), {g_h1.data(), rows, t, t},
                 grads.get("fc1.w"), grads.get("fc1.b"), &gm_enc);
  std::vector<double> g12(rows * m), g34(rows * m);
  for (size_t r = 0; r < rows; ++r)
    for (size_t j = 0; j < m; ++j) {
      g12[r * m + j] = c.pre12[r * m + j] > 0.0 ? g_enc[r * 2 * m + j] : 0.0;
      g34[r * m + j] = c.pre34[r * m + j] > 0.0 ? g_enc[r * 2 * m + m + j] : 0.0;
    }
  std::vector<double> g_in12(rows * kIn12), g_in34(rows * kIn34);
  simd::Mat gm_in12{g_in12.data(), rows, kIn12, kIn12};
  simd::Mat gm_in34{g_in34.data(), rows, kIn34, kIn34};
  dense_backward({c.in12.data(), rows, kIn12, kIn12}, params.get("merge12.w"), {g12.data(), rows, m, m},
                 grads.get("merge12.w"), grads.get("merge12.b"), &gm_in12);
  dense_backward({c.in34.data(), rows, kIn34, kIn34}, params.get("merge34.w"), {g34.data(), rows, m, m},
                 grads.get("merge34.w"), grads.get("merge34.b"), &gm_in34);

  // Band sharing.
  std::array<std::vector<double>, 4> g_feats;
  for (int k = 0; k < 4; ++k) {
    const size_t len = kBandFeatures[k];
    const size_t width = k < 2 ? kIn12 : kIn34;
    const size_t offset = (k == 1) ? kBandFeatures[0] : (k == 3 ? kBandFeatures[2] : 0);
    const std::vector<double>& src = k < 2 ? g_in12 : g_in34;
    if (input_grads) g_feats[k].assign(rows * len, 0.0);
    std::vector<double> g(len * n);
    for (size_t b = 0; b < nb; ++b) {
      for (size_t tt = 0; tt < n; ++tt) {
        const double* row = &src[(b * n + tt) * width + offset];
        for (size_t f = 0; f < len; ++f) g[f * n + tt] = row[f];
      }
      const auto gx = burst_mlp_backward(params, kShare[k], c.share[k][b], g, grads);
      if (input_grads)
        for (size_t tt = 0; tt < n; ++tt)
          for (size_t f = 0; f < len; ++f) g_feats[k][(b * n + tt) * len + f] = gx[f * n + tt];
    }
  }
  if (!input_grads) return;

  // Bands and Wiener path back to the input patches.
  input_grads->assign(nb, Burst(n));
  const auto& lp = lowpass_index();
  for (size_t r = 0; r < rows; ++r) {
    CPlane& gs = g_spec[r];
    const double* g3 = &g_feats[2][r * kBandFeatures[2]];
    const auto& order = half_order(kPatchSide);
    const size_t h3 = order.size();
    for (size_t i = 0; i < h3; ++i) at_freq(gs, order[i].u, order[i].v) += cplx(g3[i], g3[h3 + i]);
    const double* g4 = &g_feats[3][r * kBandFeatures[3]];
    for (size_t i = 0; i < lp.size(); ++i) gs.values()[lp[i]] += cplx(g4[i], g4[lp.size() + i]);
    Plane gx = real_part(idft2_rect(gs));
    for (int b = 0; b < 2; ++b) {
      const Plane g_crop = half_features_adjoint(&g_feats[b][r * kBandFeatures[b]], kBandSides[b]);
      const Plane padded = pad_center(g_crop, kPatchSide);
      for (size_t i = 0; i < gx.size(); ++i) gx.values()[i] += padded.values()[i];
    }
    (*input_grads)[r / n][r % n] = std::move(gx);
  }
}

// Full network ---------------------------------------------------------------------------

std::vector<Plane> net_forward(const ModelParams& params, std::span<const Burst> bursts,
                               NetCache* cache, double smoothing_sigma) {
  const std::vector<Burst> estimates =
      deconv_forward(params, bursts, cache ? &cache->deconv : nullptr);
  std::vector<Plane> fused(estimates.size());
  if (cache) cache->fba.assign(estimates.size(), LearnableFbaCache());
  for (size_t b = 0; b < estimates.size(); ++b) {
    std::vector<CPlane> spectra;
    spectra.reserve(estimates[b].size());
    for (const auto& e : estimates[b]) spectra.push_back(dft2(e));
    fused[b] = learnable_fba_forward(spectra, params, cache ? &cache->fba[b] : nullptr,
                                     smoothing_sigma)
                   .fused;
  }
  return fused;
}

void net_backward(const ModelParams& params, const NetCache& cache, std::span<const Plane> grad_out,
                  ModelParams& grads, std::vector<Burst>* input_grads) {
  if (grad_out.size() != cache.fba.size()) throw InvalidArgument("net_backward: burst count mismatch");
  std::vector<Burst> g_est(grad_out.size());
  for (size_t b = 0; b < grad_out.size(); ++b) {
    const auto g_spec = learnable_fba_backward(params, cache.fba[b], grad_out[b], grads);
    g_est[b].reserve(g_spec.size());
    // Estimates are real: dL/dx = Re(idft(dL/dA)).
    for (const auto& gs : g_spec) g_est[b].push_back(real_part(idft2_rect(gs)));
  }
  deconv_backward(params, cache.deconv, g_est, grads, input_grads);
}

}  // namespace bdeblur

#include "bdeblur/fba.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "bdeblur/fourier.hpp"

namespace bdeblur {

namespace {

constexpr double kMagnitudeEps = 1e-8;
// Offset inside the log of the normalized magnitudes, bounding the log at
// about -18 for a vanishing coefficient.
constexpr double kLogOffset = 1e-8;

void check_burst(std::span<const CPlane> spectra, const char* what) {
  if (spectra.empty()) throw InvalidArgument(std::string(what) + ": empty burst");
  for (const auto& s : spectra)
    if (!s.same_shape(spectra[0]) || s.empty())
      throw InvalidArgument(std::string(what) + ": spectra differ in shape");
}

int reflect(int i, int n) {
  const int period = 2 * n;
  i = ((i % period) + period) % period;
  return i < n ? i : period - 1 - i;
}

std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += taps[i + radius];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

// Sum of the values in ascending order. The result does not depend on the
// order of the frames, so fusion is exactly invariant under reordering.
double sorted_sum(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

void renormalize(WeightField& w) {
  const size_t n = w.plane_size();
  std::vector<double> terms(w.frames);
  for (size_t pos = 0; pos < n; ++pos) {
    for (int f = 0; f < w.frames; ++f) terms[f] = w.at(f, pos);
    const double sum = sorted_sum(terms);
    if (sum > 0.0) {
      for (int f = 0; f < w.frames; ++f) w.at(f, pos) /= sum;
    } else {
      for (int f = 0; f < w.frames; ++f) w.at(f, pos) = 1.0 / w.frames;
    }
  }
}

}  // namespace

double weight_sum_error(const WeightField& w) {
  double worst = 0.0;
  const size_t n = w.plane_size();
  for (size_t pos = 0; pos < n; ++pos) {
    double sum = 0.0;
    for (int f = 0; f < w.frames; ++f) {
      const double v = w.at(f, pos);
      if (!(v >= 0.0) || !std::isfinite(v)) return std::numeric_limits<double>::infinity();
      sum += v;
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

WeightField fba_weights(std::span<const CPlane> spectra, double p) {
  if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument("fba_weights: p must be finite and >= 0");
  check_burst(spectra, "fba_weights");
  const int n = static_cast<int>(spectra.size());
  WeightField w(n, spectra[0].rows(), spectra[0].cols());
  const size_t size = w.plane_size();
  std::vector<double> mag(n), terms(n);
  for (size_t pos = 0; pos < size; ++pos) {
    double peak = 0.0;
    for (int f = 0; f < n; ++f) {
      mag[f] = std::abs(spectra[f].values()[pos]);
      peak = std::max(peak, mag[f]);
    }
    if (p == 0.0 || peak == 0.0) {
      for (int f = 0; f < n; ++f) w.at(f, pos) = 1.0 / n;
      continue;
    }
    // Ratios to the per-frequency peak keep |a|^p from overflowing.
    for (int f = 0; f < n; ++f) terms[f] = mag[f] = std::pow(mag[f] / peak, p);
    const double sum = sorted_sum(terms);
    for (int f = 0; f < n; ++f) w.at(f, pos) = mag[f] / sum;
  }
  return w;
}

WeightField smooth_weights(const WeightField& w, double sigma) {
  if (sigma < 0.0) throw InvalidArgument("smooth_weights: negative sigma");
  if (sigma == 0.0) return w;
  const auto taps = gaussian_taps(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  WeightField out = w;
  std::vector<double> tmp(w.plane_size());
  for (int f = 0; f < w.frames; ++f) {
    const double* src = &w.w[f * w.plane_size()];
    double* dst = &out.w[f * w.plane_size()];
    for (int r = 0; r < w.rows; ++r)
      for (int c = 0; c < w.cols; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += taps[k + radius] * src[static_cast<size_t>(r) * w.cols + reflect(c + k, w.cols)];
        tmp[static_cast<size_t>(r) * w.cols + c] = acc;
      }
    for (int r = 0; r < w.rows; ++r)
      for (int c = 0; c < w.cols; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += taps[k + radius] * tmp[static_cast<size_t>(reflect(r + k, w.rows)) * w.cols + c];
        dst[static_cast<size_t>(r) * w.cols + c] = acc;
      }
  }
  renormalize(out);
  return out;
}

CPlane fba_fuse_spectrum(std::span<const CPlane> spectra, const WeightField& w) {
  check_burst(spectra, "fba_fuse");
  if (w.frames != static_cast<int>(spectra.size()) || w.rows != spectra[0].rows() ||
      w.cols != spectra[0].cols())
    throw InvalidArgument("fba_fuse: weight field does not match spectra");
  CPlane fused(w.rows, w.cols);
  const size_t size = w.plane_size();
  std::vector<double> re(w.frames), im(w.frames);
  for (size_t pos = 0; pos < size; ++pos) {
    for (int f = 0; f < w.frames; ++f) {
      const cplx term = w.at(f, pos) * spectra[f].values()[pos];
      re[f] = term.real();
      im[f] = term.imag();
    }
    fused.values()[pos] = {sorted_sum(re), sorted_sum(im)};
  }
  return fused;
}

Plane fba_fuse(std::span<const CPlane> spectra, const WeightField& w) {
  const CPlane z = idft2_rect(fba_fuse_spectrum(spectra, w));
  Plane out(z.rows(), z.cols());
  for (size_t i = 0; i < z.size(); ++i) out.values()[i] = z.values()[i].real();
  return out;
}

Plane fba_fuse_frames(std::span<const Plane> frames, const FbaConfig& cfg) {
  if (frames.empty()) throw InvalidArgument("fba_fuse_frames: empty burst");
  std::vector<CPlane> spectra;
  spectra.reserve(frames.size());
  for (const auto& f : frames) {
    if (!f.same_shape(frames[0])) throw InvalidArgument("fba_fuse_frames: frames differ in shape");
    spectra.push_back(dft2_rect(f));
  }
  return fba_fuse(spectra, smooth_weights(fba_weights(spectra, cfg.p), cfg.smoothing_sigma));
}

// Learnable FBA ------------------------------------------------------------------

void add_fba_params(ModelParams& params, size_t burst) { add_burst_mlp(params, kFbaPrefix, burst); }

void init_fba_params(ModelParams& params, std::mt19937_64& rng, double noise_std) {
  init_burst_mlp_identity(params, kFbaPrefix, noise_std, rng);
}

uint64_t fba_param_hash(const ModelParams& params) {
  uint64_t h = 1469598103934665603ull;
  for (const char* suffix : {".w1", ".b1", ".w2", ".b2"}) {
    for (double v : params.get(std::string(kFbaPrefix) + suffix).values) {
      const uint64_t bits = std::bit_cast<uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

LearnableFbaResult learnable_fba_forward(std::span<const CPlane> spectra, const ModelParams& params,
                                         LearnableFbaCache* cache, double smoothing_sigma) {
  check_burst(spectra, "learnable_fba_forward");
  const int n = static_cast<int>(spectra.size());
  const Tensor& w1 = params.get(std::string(kFbaPrefix) + ".w1");
  if (w1.shape[0] != static_cast<size_t>(n))
    throw InvalidArgument("learnable_fba_forward: burst size does not match parameters");

  const int rows = spectra[0].rows(), cols = spectra[0].cols();
  const size_t positions = static_cast<size_t>(rows) * cols;

  std::vector<double> magnitude(positions * n), normalized(positions * n), sums(positions);
  for (size_t pos = 0; pos < positions; ++pos) {
    double s = kMagnitudeEps;
    for (int f = 0; f < n; ++f) {
      const double m = std::abs(spectra[f].values()[pos]);
      magnitude[pos * n + f] = m;
      s += m;
    }
    sums[pos] = s;
    for (int f = 0; f < n; ++f) normalized[pos * n + f] = std::log(magnitude[pos * n + f] / s + kLogOffset);
  }

  BurstMlpCache mlp;
  std::vector<double> logits = burst_mlp_forward(params, kFbaPrefix, normalized, positions,
                                                 cache ? &mlp : nullptr, kFbaFloor);

  // Softmax across frames at every frequency.
  std::vector<double>& soft = logits;
  for (size_t pos = 0; pos < positions; ++pos) {
    double* o = &soft[pos * n];
    const double top = *std::max_element(o, o + n);
    double sum = 0.0;
    for (int f = 0; f < n; ++f) {
      o[f] = std::exp(o[f] - top);
      sum += o[f];
    }
    for (int f = 0; f < n; ++f) o[f] /= sum;
  }

  WeightField weights(n, rows, cols);
  for (size_t pos = 0; pos < positions; ++pos)
    for (int f = 0; f < n; ++f) weights.at(f, pos) = soft[pos * n + f];
  if (smoothing_sigma > 0.0) weights = smooth_weights(weights, smoothing_sigma);

  LearnableFbaResult result;
  result.fused_spectrum = fba_fuse_spectrum(spectra, weights);
  const CPlane z = idft2_rect(result.fused_spectrum);
  result.fused = Plane(rows, cols);
  for (size_t i = 0; i < z.size(); ++i) result.fused.values()[i] = z.values()[i].real();
  result.weights = std::move(weights);

  if (cache) {
    cache->frames = n;
    cache->rows = rows;
    cache->cols = cols;
    cache->smoothed = smoothing_sigma > 0.0;
    cache->param_hash = fba_param_hash(params);
    cache->spectra.assign(spectra.begin(), spectra.end());
    cache->magnitude = std::move(magnitude);
    cache->norm_sum = std::move(sums);
    cache->weights = std::move(soft);
    cache->mlp = std::move(mlp);
  }
  return result;
}

std::vector<CPlane> learnable_fba_backward(const ModelParams& params,
                                           const LearnableFbaCache& cache, const Plane& grad_out,
                                           ModelParams& grads) {
  if (cache.frames == 0 || cache.spectra.empty())
    throw InvalidArgument("learnable_fba_backward: empty cache");
  if (cache.smoothed)
    throw InvalidArgument("learnable_fba_backward: cache from a smoothed (inference) pass");
  if (cache.param_hash != fba_param_hash(params))
    throw InvalidArgument("learnable_fba_backward: stale cache, parameters changed since forward");
  if (grad_out.rows() != cache.rows || grad_out.cols() != cache.cols)
    throw InvalidArgument("learnable_fba_backward: gradient shape mismatch");

  const int n = cache.frames;
  const size_t positions = static_cast<size_t>(cache.rows) * cache.cols;

  // out = Re(idft(F))  =>  dL/dF = dft(grad_out).
  const CPlane g_fused = dft2_rect(grad_out);

  std::vector<CPlane> g_spec(n, CPlane(cache.rows, cache.cols));
  std::vector<double> g_logits(positions * n);
  for (size_t pos = 0; pos < positions; ++pos) {
    const cplx gf = g_fused.values()[pos];
    const double* w = &cache.weights[pos * n];
    double* go = &g_logits[pos * n];
    double dot = 0.0;
    for (int f = 0; f < n; ++f) {
      const cplx a = cache.spectra[f].values()[pos];
      g_spec[f].values()[pos] = w[f] * gf;
      go[f] = a.real() * gf.real() + a.imag() * gf.imag();  // dL/dw_f
      dot += w[f] * go[f];
    }
    for (int f = 0; f < n; ++f) go[f] = w[f] * (go[f] - dot);
  }

  const std::vector<double> g_norm = burst_mlp_backward(params, kFbaPrefix, cache.mlp, g_logits, grads);

  // x_f = log(m_f / s + offset), s = sum_j m_j + eps.
  std::vector<double> h(n);
  for (size_t pos = 0; pos < positions; ++pos) {
    const double s = cache.norm_sum[pos];
    const double* m = &cache.magnitude[pos * n];
    const double* gx = &g_norm[pos * n];
    double cross = 0.0;
    for (int f = 0; f < n; ++f) {
      h[f] = gx[f] / (m[f] / s + kLogOffset);
      cross += h[f] * m[f];
    }
    for (int f = 0; f < n; ++f) {
      if (m[f] == 0.0) continue;
      const double g_mag = h[f] / s - cross / (s * s);
      const cplx a = cache.spectra[f].values()[pos];
      g_spec[f].values()[pos] += g_mag * a / m[f];
    }
  }
  return g_spec;
}

}  // namespace bdeblur

#include "bdeblur/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bdeblur/deconvnet.hpp"
#include "bdeblur/fba.hpp"
#include "bdeblur/fourier.hpp"
#include "bdeblur/nn.hpp"

namespace bdeblur {

namespace {

using Rng = std::mt19937_64;

std::vector<double> uniform(size_t n, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Up to `limit` coordinates whose analytic gradient is not negligible next to
// the largest one; below that the central difference is dominated by rounding.
std::vector<size_t> pick_coords(std::span<const double> analytic, size_t limit, Rng& rng) {
  double peak = 0.0;
  for (double a : analytic) peak = std::max(peak, std::abs(a));
  std::vector<size_t> idx;
  for (size_t i = 0; i < analytic.size(); ++i)
    if (std::abs(analytic[i]) >= 1e-3 * peak) idx.push_back(i);
  std::shuffle(idx.begin(), idx.end(), rng);
  if (idx.size() > limit) idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

GradCheckReport check(const std::string& name,
                      const std::function<double(std::span<const double>)>& f,
                      std::span<const double> x, std::span<const double> analytic, size_t limit,
                      Rng& rng) {
  const auto coords = pick_coords(analytic, limit, rng);
  GradCheckReport r;
  r.name = name;
  r.coords = coords.size();
  r.max_rel_error = coords.empty() ? 0.0 : grad_check(f, x, analytic, 1e-6, coords);
  return r;
}

bool far_from_kinks(std::span<const double> pre, double floor = 0.0) {
  for (double v : pre)
    if (std::abs(v - floor) < 1e-3) return false;
  return true;
}

// nn ----------------------------------------------------------------------------------

void check_nn(Rng& rng, std::vector<GradCheckReport>& out) {
  {  // dense 7 -> 5
    Tensor w{{5, 7}, uniform(35, -1, 1, rng)}, b{{5}, uniform(5, -1, 1, rng)};
    const auto x = uniform(7, -1, 1, rng), r = uniform(5, -1, 1, rng);
    const DenseGrads g = dense_backward(x, w, r);
    std::vector<double> flat = w.values;
    flat.insert(flat.end(), b.values.begin(), b.values.end());
    flat.insert(flat.end(), x.begin(), x.end());
    std::vector<double> an = g.w.values;
    an.insert(an.end(), g.b.values.begin(), g.b.values.end());
    an.insert(an.end(), g.x.begin(), g.x.end());
    auto f = [&](std::span<const double> v) {
      Tensor ww{{5, 7}, {v.begin(), v.begin() + 35}}, bb{{5}, {v.begin() + 35, v.begin() + 40}};
      return dot(dense_forward(v.subspan(40), ww, bb), r);
    };
    out.push_back(check("dense", f, flat, an, 1000, rng));
  }
  {  // ReLU, inputs at least 0.1 away from the kink
    std::vector<double> x = uniform(16, 0.1, 1.0, rng);
    for (size_t i = 0; i < x.size(); i += 2) x[i] = -x[i];
    const auto r = uniform(16, -1, 1, rng);
    std::vector<double> an = r;
    relu_backward_inplace(x, an);
    auto f = [&](std::span<const double> v) {
      std::vector<double> y(v.begin(), v.end());
      relu_inplace(y);
      return dot(y, r);
    };
    // Every coordinate, including the zero-gradient ones.
    GradCheckReport rep{"relu", grad_check(f, x, an, 1e-6), x.size()};
    out.push_back(rep);
  }
  {  // burst MLP, N = 4, M = 6, plain and floored activation
    for (double floor : {0.0, -3.0}) {
      ModelParams p;
      add_burst_mlp(p, "m", 4);
      std::vector<double> x, r;
      BurstMlpCache cache;
      for (int attempt = 0;; ++attempt) {
        for (size_t i = 0; i < p.count(); ++i) p.tensor(i).values = uniform(p.tensor(i).size(), -1, 1, rng);
        x = uniform(24, -2, 2, rng);
        r = uniform(24, -1, 1, rng);
        burst_mlp_forward(p, "m", x, 6, &cache, floor);
        if (far_from_kinks(cache.pre, floor) || attempt > 50) break;
      }
      ModelParams grads = p.zeros_like();
      const auto gx = burst_mlp_backward(p, "m", cache, r, grads);
      std::vector<double> flat = p.flatten(), an = grads.flatten();
      const size_t np = flat.size();
      flat.insert(flat.end(), x.begin(), x.end());
      an.insert(an.end(), gx.begin(), gx.end());
      auto f = [&](std::span<const double> v) {
        ModelParams q = p;
        q.unflatten(v.first(np));
        return dot(burst_mlp_forward(q, "m", v.subspan(np), 6, nullptr, floor), r);
      };
      out.push_back(check(floor == 0.0 ? "burst_mlp" : "burst_mlp_floor", f, flat, an, 1000, rng));
    }
  }
  {  // MSE
    const auto pred = uniform(20, 0, 1, rng), target = uniform(20, 0, 1, rng);
    const auto lg = mse_loss(pred, target);
    auto f = [&](std::span<const double> v) { return mse_loss(v, target).loss; };
    out.push_back(check("mse_loss", f, pred, lg.grad, 1000, rng));
  }
}

// fba ----------------------------------------------------------------------------------

// `weak` scales frame 0 down by 1e-2 so that it gets almost no weight and
// reaches the loss mainly through the magnitude normalization.
void check_fba(Rng& rng, std::vector<GradCheckReport>& out, bool weak) {
  const int n = 3, side = 5;
  ModelParams p;
  add_fba_params(p, n);
  init_fba_params(p, rng, 0.3);
  std::vector<CPlane> spectra;
  std::vector<double> r;
  LearnableFbaCache cache;
  for (int attempt = 0;; ++attempt) {
    spectra.clear();
    for (int t = 0; t < n; ++t) {
      Plane x(side, side);
      const auto v = uniform(x.size(), 0, 1, rng);
      std::copy(v.begin(), v.end(), x.begin());
      if (weak && t == 0)
        for (auto& e : x) e *= 1e-2;
      spectra.push_back(dft2(x));
    }
    r = uniform(side * side, -1, 1, rng);
    learnable_fba_forward(spectra, p, &cache);
    if (far_from_kinks(cache.mlp.pre, kFbaFloor) || attempt > 50) break;
  }
  ModelParams grads = p.zeros_like();
  Plane go(side, side);
  std::copy(r.begin(), r.end(), go.begin());
  const auto g_spec = learnable_fba_backward(p, cache, go, grads);

  std::vector<double> flat = p.flatten(), an = grads.flatten();
  const size_t np = flat.size();
  for (int t = 0; t < n; ++t)
    for (size_t i = 0; i < spectra[t].size(); ++i) {
      flat.push_back(spectra[t].values()[i].real());
      flat.push_back(spectra[t].values()[i].imag());
      an.push_back(g_spec[t].values()[i].real());
      an.push_back(g_spec[t].values()[i].imag());
    }
  auto f = [&](std::span<const double> v) {
    ModelParams q = p;
    q.unflatten(v.first(np));
    std::vector<CPlane> s(n, CPlane(side, side));
    size_t k = np;
    for (int t = 0; t < n; ++t)
      for (auto& z : s[t]) {
        z = cplx(v[k], v[k + 1]);
        k += 2;
      }
    return dot(learnable_fba_forward(s, q).fused.values(), r);
  };
  out.push_back(check(weak ? "learnable_fba_weak" : "learnable_fba", f, flat, an, 2000, rng));
}

// deconvnet ------------------------------------------------------------------------------

void check_wiener(Rng& rng, std::vector<GradCheckReport>& out) {
  Plane patch(kPatchSide, kPatchSide), gains(kPatchSide, kPatchSide), go(kOutputSide, kOutputSide);
  for (auto* pl : {&patch, &gains}) {
    const auto v = uniform(pl->size(), 0, 1, rng);
    std::copy(v.begin(), v.end(), pl->begin());
  }
  const auto rv = uniform(go.size(), -1, 1, rng);
  std::copy(rv.begin(), rv.end(), go.begin());
  const WienerGrads g = apply_wiener_backward(patch, gains, go);
  std::vector<double> flat = patch.values(), an = g.patch.values();
  flat.insert(flat.end(), gains.begin(), gains.end());
  an.insert(an.end(), g.gains.begin(), g.gains.end());
  const size_t np = patch.size();
  auto f = [&](std::span<const double> v) {
    Plane p(kPatchSide, kPatchSide), k(kPatchSide, kPatchSide);
    std::copy(v.begin(), v.begin() + np, p.begin());
    std::copy(v.begin() + np, v.end(), k.begin());
    return dot(apply_wiener(p, k).values(), go.values());
  };
  out.push_back(check("apply_wiener", f, flat, an, 400, rng));
}

bool net_far_from_kinks(const NetCache& c) {
  const DeconvCache& d = c.deconv;
  for (const auto* v : {&d.pre12, &d.pre34, &d.pre1, &d.pre2})
    if (!far_from_kinks(*v)) return false;
  for (const auto& band : d.share)
    for (const auto& mc : band)
      if (!far_from_kinks(mc.pre, kShareFloor)) return false;
  for (const auto& fc : c.fba)
    if (!far_from_kinks(fc.mlp.pre, kFbaFloor)) return false;
  return true;
}

void check_network(Rng& rng, std::vector<GradCheckReport>& out) {
  NetConfig cfg;
  cfg.burst = 3;
  cfg.width_scale = 1.0 / 256.0;
  ModelParams p;
  std::vector<Burst> bursts;
  std::vector<Plane> r;
  NetCache cache;
  for (int attempt = 0;; ++attempt) {
    p = make_model(cfg, rng());
    // Break the all-ones start so that every layer carries gradient.
    for (auto& v : p.get("head.w").values) v = std::uniform_real_distribution<double>(-0.05, 0.05)(rng);
    init_fba_params(p, rng, 0.3);
    bursts.assign(1, Burst());
    for (int t = 0; t < cfg.burst; ++t) {
      Plane x(kPatchSide, kPatchSide);
      const auto v = uniform(x.size(), 0, 1, rng);
      std::copy(v.begin(), v.end(), x.begin());
      bursts[0].push_back(std::move(x));
    }
    r.assign(1, Plane(kOutputSide, kOutputSide));
    const auto rv = uniform(r[0].size(), -1, 1, rng);
    std::copy(rv.begin(), rv.end(), r[0].begin());
    cache = NetCache();
    net_forward(p, bursts, &cache);
    if (net_far_from_kinks(cache) || attempt > 50) break;
  }
  ModelParams grads = p.zeros_like();
  std::vector<Burst> input_grads;
  net_backward(p, cache, r, grads, &input_grads);

  auto loss = [&](const ModelParams& q, const std::vector<Burst>& b) {
    return dot(net_forward(q, b)[0].values(), r[0].values());
  };
  // Parameters, tensor by tensor so that small tensors are not crowded out.
  double worst = 0.0;
  size_t coords = 0;
  for (size_t t = 0; t < p.count(); ++t) {
    const std::vector<double> x0 = p.tensor(t).values;
    auto f = [&](std::span<const double> v) {
      ModelParams q = p;
      q.tensor(t).values.assign(v.begin(), v.end());
      return loss(q, bursts);
    };
    const auto rep = check(p.name(t), f, x0, grads.tensor(t).values, 6, rng);
    worst = std::max(worst, rep.max_rel_error);
    coords += rep.coords;
  }
  out.push_back({"network_params", worst, coords});

  std::vector<double> x0, an;
  for (int t = 0; t < cfg.burst; ++t) {
    x0.insert(x0.end(), bursts[0][t].begin(), bursts[0][t].end());
    an.insert(an.end(), input_grads[0][t].begin(), input_grads[0][t].end());
  }
  auto f = [&](std::span<const double> v) {
    std::vector<Burst> b = bursts;
    size_t k = 0;
    for (auto& frame : b[0])
      for (auto& px : frame) px = v[k++];
    return loss(p, b);
  };
  out.push_back(check("network_inputs", f, x0, an, 24, rng));
}

}  // namespace

std::vector<GradCheckReport> run_grad_checks(const std::string& module, uint64_t seed) {
  const bool all = module == "all";
  if (!all && module != "nn" && module != "fba" && module != "deconvnet")
    throw InvalidArgument("grad-check: unknown module '" + module + "'");
  Rng rng(seed);
  std::vector<GradCheckReport> out;
  if (all || module == "nn") check_nn(rng, out);
  if (all || module == "fba") {
    check_fba(rng, out, false);
    check_fba(rng, out, true);
  }
  if (all || module == "deconvnet") {
    check_wiener(rng, out);
    check_network(rng, out);
  }
  return out;
}

}  // namespace bdeblur

#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "bdeblur/fba.hpp"
#include "bdeblur/fourier.hpp"
#include "bdeblur/gradcheck.hpp"
#include "bdeblur/psf.hpp"
#include "helpers.hpp"

using namespace bdeblur;
using namespace bdeblur::testing;

namespace {

std::vector<CPlane> random_spectra(int n, int rows, int cols, std::mt19937_64& rng) {
  std::vector<CPlane> out;
  for (int i = 0; i < n; ++i) out.push_back(dft2_rect(random_plane(rows, cols, rng)));
  return out;
}

std::vector<Plane> blurred_burst(const Plane& sharp, int n, std::mt19937_64& rng) {
  std::vector<Plane> frames;
  GpConfig gp;
  for (int i = 0; i < n; ++i)
    frames.push_back(fft_convolve(sharp, rasterize(sample_trajectory(gp, rng), 9), Boundary::circular));
  return frames;
}

}  // namespace

TEST_CASE("vanilla weights") {
  std::mt19937_64 rng(31);
  const auto spectra = random_spectra(4, 9, 9, rng);
  const WeightField uni = fba_weights(spectra, 0.0);
  for (double v : uni.w) CHECK(v == 0.25);

  const WeightField single = fba_weights(std::span(spectra).first(1), 7.0);
  for (double v : single.w) CHECK(v == 1.0);

  CPlane a(1, 1, cplx(2.0, 0.0)), b(1, 1, cplx(0.0, 1.0));
  const WeightField w = fba_weights(std::vector<CPlane>{a, b}, 2.0);
  CHECK(w.at(0, 0) == doctest::Approx(0.8));
  CHECK(w.at(1, 0) == doctest::Approx(0.2));

  const WeightField zero = fba_weights(std::vector<CPlane>{CPlane(2, 2), CPlane(2, 2)}, 3.0);
  for (double v : zero.w) CHECK(v == 0.5);

  for (int n = 1; n <= 14; ++n)
    for (double p : {0.0, 1.0, 7.0, 11.0, 100.0}) {
      const auto s = random_spectra(n, 7, 8, rng);
      CHECK(weight_sum_error(fba_weights(s, p)) < 1e-9);
    }
  CHECK_THROWS_AS(fba_weights(spectra, -1.0), InvalidArgument);
  CHECK_THROWS_AS(fba_weights(std::vector<CPlane>{CPlane(3, 3), CPlane(3, 4)}, 1.0), InvalidArgument);
}

TEST_CASE("weight smoothing") {
  std::mt19937_64 rng(32);
  const auto spectra = random_spectra(5, 17, 17, rng);
  const WeightField w = fba_weights(spectra, 11.0);
  CHECK(smooth_weights(w, 0.0).w == w.w);
  const WeightField uni(5, 17, 17, 0.2);
  const WeightField su = smooth_weights(uni, 2.0);
  for (double v : su.w) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(weight_sum_error(smooth_weights(w, 2.0)) < 1e-12);
  CHECK(weight_sum_error(smooth_weights(w, 0.7)) < 1e-12);
  CHECK_THROWS_AS(smooth_weights(w, -1.0), InvalidArgument);
}

TEST_CASE("fusion") {
  std::mt19937_64 rng(33);
  SUBCASE("identical frames") {
    const Plane f = random_plane(11, 13, rng);
    const std::vector<Plane> frames(5, f);
    CHECK(max_abs_diff(fba_fuse_frames(frames, {11.0, 2.0}), f) < 1e-12);
  }
  SUBCASE("p = 0 is the pixel mean") {
    std::vector<Plane> frames;
    for (int i = 0; i < 6; ++i) frames.push_back(random_plane(16, 12, rng));
    Plane mean(16, 12);
    for (const auto& f : frames)
      for (size_t i = 0; i < mean.size(); ++i) mean.values()[i] += f.values()[i] / 6.0;
    CHECK(max_abs_diff(fba_fuse_frames(frames, {0.0, 0.0}), mean) < 1e-10);
    CHECK(max_abs_diff(fba_fuse_frames(frames, {0.0, 2.0}), mean) < 1e-10);
  }
  SUBCASE("large p selects the dominant frame") {
    const Plane sharp = random_plane(33, 33, rng);
    Plane blurred = fft_convolve(sharp, Plane(9, 9, 1.0 / 81.0), Boundary::circular);
    const std::vector<CPlane> spectra = {dft2_rect(sharp), dft2_rect(blurred)};
    const CPlane fused = fba_fuse_spectrum(spectra, fba_weights(spectra, 100.0));
    size_t checked = 0;
    for (size_t i = 0; i < fused.size(); ++i) {
      const double m0 = std::abs(spectra[0].values()[i]), m1 = std::abs(spectra[1].values()[i]);
      if (m0 < 1.1 * m1) continue;  // sharp frame does not clearly dominate here
      ++checked;
      CHECK(std::abs(fused.values()[i] - spectra[0].values()[i]) <= 1e-3 * m0);
    }
    CHECK(checked > fused.size() / 2);
  }
  SUBCASE("triangle inequality for convex weights") {
    const auto spectra = random_spectra(5, 9, 9, rng);
    for (double p : {0.0, 1.0, 11.0}) {
      const CPlane fused = fba_fuse_spectrum(spectra, smooth_weights(fba_weights(spectra, p), 1.0));
      for (size_t i = 0; i < fused.size(); ++i) {
        double top = 0.0;
        for (const auto& s : spectra) top = std::max(top, std::abs(s.values()[i]));
        CHECK(std::abs(fused.values()[i]) <= top * (1.0 + 1e-12));
      }
    }
  }
  SUBCASE("frame order does not matter, bit for bit") {
    const Plane sharp = random_plane(21, 21, rng);
    std::vector<Plane> frames = blurred_burst(sharp, 7, rng);
    const Plane ref = fba_fuse_frames(frames, {11.0, 2.0});
    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 5; ++trial) {
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<Plane> shuffled;
      for (int i : perm) shuffled.push_back(frames[i]);
      CHECK(fba_fuse_frames(shuffled, {11.0, 2.0}) == ref);
    }
  }
  SUBCASE("a sharp frame pulls the result towards it") {
    const Plane sharp = random_plane(32, 32, rng);
    std::vector<Plane> frames = blurred_burst(sharp, 5, rng);
    frames.push_back(sharp);
    Plane mean(32, 32);
    for (const auto& f : frames)
      for (size_t i = 0; i < mean.size(); ++i) mean.values()[i] += f.values()[i] / frames.size();
    CHECK(psnr(fba_fuse_frames(frames, {11.0, 0.0}), sharp) > psnr(mean, sharp));
  }
}

TEST_CASE("learnable fusion") {
  std::mt19937_64 rng(34);
  ModelParams params;
  add_fba_params(params, 4);
  init_fba_params(params, rng);

  SUBCASE("identical frames pass through") {
    const CPlane s = dft2_rect(random_plane(9, 9, rng));
    const auto r = learnable_fba_forward(std::vector<CPlane>(4, s), params);
    CHECK(max_abs_diff(r.fused, idft2(s)) < 1e-9);
    CHECK(weight_sum_error(r.weights) < 1e-12);
  }
  SUBCASE("identity init ranks frames like p = 1") {
    const auto spectra = random_spectra(4, 9, 9, rng);
    const auto r = learnable_fba_forward(spectra, params);
    const WeightField ref = fba_weights(spectra, 1.0);
    for (size_t pos = 0; pos < ref.plane_size(); ++pos) {
      int a = 0, b = 0;
      for (int f = 1; f < 4; ++f) {
        if (r.weights.at(f, pos) > r.weights.at(a, pos)) a = f;
        if (ref.at(f, pos) > ref.at(b, pos)) b = f;
      }
      CHECK(a == b);
    }
  }
  SUBCASE("permutation equivariance") {
    std::mt19937_64 prng(7);
    ModelParams p;
    add_fba_params(p, 4);
    init_fba_params(p, prng, 0.3);
    const auto spectra = random_spectra(4, 7, 7, rng);
    const int perm[4] = {2, 0, 3, 1};
    // Permute inputs and both layers' input/output rows consistently.
    ModelParams q = p;
    for (const char* name : {"fba.w1", "fba.w2"})
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          q.get(name).values[i * 4 + j] = p.get(name).values[perm[i] * 4 + perm[j]];
    for (const char* name : {"fba.b1", "fba.b2"})
      for (int i = 0; i < 4; ++i) q.get(name).values[i] = p.get(name).values[perm[i]];
    std::vector<CPlane> shuffled;
    for (int i : perm) shuffled.push_back(spectra[i]);
    const auto a = learnable_fba_forward(spectra, p), b = learnable_fba_forward(shuffled, q);
    CHECK(max_abs_diff(a.fused, b.fused) < 1e-12);
  }
  SUBCASE("positive scaling of the burst scales the output") {
    const auto spectra = random_spectra(4, 9, 9, rng);
    std::vector<CPlane> scaled = spectra;
    for (auto& s : scaled)
      for (auto& z : s) z *= 3.0;
    const auto a = learnable_fba_forward(spectra, params), b = learnable_fba_forward(scaled, params);
    Plane a3 = a.fused;
    for (auto& v : a3) v *= 3.0;
    CHECK(max_abs_diff(a3, b.fused) < 1e-9);
  }
  SUBCASE("backward") {
    const auto spectra = random_spectra(4, 5, 5, rng);
    LearnableFbaCache cache;
    learnable_fba_forward(spectra, params, &cache);
    ModelParams grads = params.zeros_like();
    const auto g = learnable_fba_backward(params, cache, Plane(5, 5), grads);
    for (const auto& s : g)
      for (auto z : s) CHECK(z == cplx(0.0));
    CHECK(grads.squared_norm() == 0.0);

    ModelParams changed = params;
    changed.get("fba.b1").values[0] += 0.1;
    CHECK_THROWS_AS(learnable_fba_backward(changed, cache, Plane(5, 5), grads), InvalidArgument);
    LearnableFbaCache smoothed;
    learnable_fba_forward(spectra, params, &smoothed, 1.0);
    CHECK_THROWS_AS(learnable_fba_backward(params, smoothed, Plane(5, 5), grads), InvalidArgument);
  }
  SUBCASE("finite differences") {
    for (const auto& r : run_grad_checks("fba")) {
      INFO(r.name);
      CHECK(r.max_rel_error < kGradCheckTolerance);
    }
  }
  CHECK_THROWS_AS(learnable_fba_forward(random_spectra(3, 5, 5, rng), params), InvalidArgument);
}

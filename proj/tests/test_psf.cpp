#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "bdeblur/psf.hpp"
#include "helpers.hpp"

using namespace bdeblur;
using namespace bdeblur::testing;

TEST_CASE("matern covariance closed form") {
  GpConfig cfg;
  cfg.variance = 1.0;
  cfg.length_scale = 0.3;
  CHECK(matern_cov(0.0, cfg) == 1.0);
  CHECK(matern_cov(0.3, cfg) == doctest::Approx((1.0 + std::sqrt(3.0)) * std::exp(-std::sqrt(3.0))));
  CHECK(matern_cov(0.3, cfg) == doctest::Approx(0.48335).epsilon(1e-4));
  CHECK(matern_cov(100.0, cfg) < 1e-100);
  // Monotone decay.
  double prev = 2.0;
  for (double d = 0.0; d < 2.0; d += 0.05) {
    const double c = matern_cov(d, cfg);
    CHECK(c < prev);
    prev = c;
  }
  CHECK_THROWS_AS(matern_cov(-0.1, cfg), InvalidArgument);
}

TEST_CASE("trajectory sampling") {
  GpConfig cfg;
  SUBCASE("zero variance stays at the origin") {
    cfg.variance = 0.0;
    std::mt19937_64 rng(1);
    for (const auto& p : sample_trajectory(cfg, rng)) {
      CHECK(p.x == 0.0);
      CHECK(p.y == 0.0);
    }
  }
  SUBCASE("seeded draws are reproducible") {
    std::mt19937_64 a(42), b(42);
    const auto ta = sample_trajectory(cfg, a), tb = sample_trajectory(cfg, b);
    REQUIRE(ta.size() == tb.size());
    for (size_t i = 0; i < ta.size(); ++i) {
      CHECK(ta[i].x == tb[i].x);
      CHECK(ta[i].y == tb[i].y);
    }
  }
  SUBCASE("centroid at the origin") {
    std::mt19937_64 rng(2);
    const auto t = sample_trajectory(cfg, rng);
    double mx = 0.0, my = 0.0;
    for (const auto& p : t) {
      mx += p.x;
      my += p.y;
    }
    CHECK(std::abs(mx / t.size()) < 1e-12);
    CHECK(std::abs(my / t.size()) < 1e-12);
  }
  SUBCASE("empirical covariance matches the kernel") {
    cfg.samples = 251;  // time step 1/250, so lags 0.1 and 0.3 fall on the grid
    const TrajectorySampler sampler(cfg);
    std::mt19937_64 rng(3);
    const int i0 = 100, draws = 10000;
    double c0 = 0.0, c1 = 0.0, c3 = 0.0;
    for (int d = 0; d < draws; ++d) {
      const auto t = sampler.sample(rng);
      for (double a0 : {t[i0].x, t[i0].y}) c0 += a0 * a0;
      c1 += t[i0].x * t[i0 + 25].x + t[i0].y * t[i0 + 25].y;
      c3 += t[i0].x * t[i0 + 75].x + t[i0].y * t[i0 + 75].y;
    }
    const double n = 2.0 * draws;
    CHECK(c0 / n == doctest::Approx(matern_cov(0.0, cfg)).epsilon(0.05));
    CHECK(c1 / n == doctest::Approx(matern_cov(0.1, cfg)).epsilon(0.05));
    CHECK(c3 / n == doctest::Approx(matern_cov(0.3, cfg)).epsilon(0.05));
  }
  cfg.samples = 1;
  CHECK_THROWS_AS(TrajectorySampler{cfg}, InvalidArgument);
}

TEST_CASE("rasterization") {
  const BlurKernel d = rasterize({{0.0, 0.0}}, 7);
  CHECK(d == delta_kernel(7));

  const BlurKernel two = rasterize({{-1.0, 0.0}, {1.0, 0.0}}, 7);
  CHECK(two(3, 2) == doctest::Approx(0.5));
  CHECK(two(3, 4) == doctest::Approx(0.5));
  CHECK(std::accumulate(two.begin(), two.end(), 0.0) == doctest::Approx(1.0));

  // Half-way between two cells splits the mass.
  const BlurKernel half = rasterize({{0.5, 0.0}}, 5);
  CHECK(half(2, 2) == doctest::Approx(0.5));
  CHECK(half(2, 3) == doctest::Approx(0.5));

  // Oversized paths are shrunk to fit within (K-1)/2 - 1.
  const BlurKernel big = rasterize({{-20.0, 0.0}, {20.0, 0.0}}, 7);
  CHECK(big(3, 1) == doctest::Approx(0.5));
  CHECK(big(3, 5) == doctest::Approx(0.5));

  CHECK_THROWS_AS(rasterize({}, 7), InvalidArgument);
  CHECK_THROWS_AS(rasterize({{0.0, 0.0}}, 6), InvalidArgument);
}

TEST_CASE("generated kernels are probability masses") {
  const GpConfig cfg;
  const TrajectorySampler sampler(cfg);
  for (int side : {7, 17})
    for (uint64_t seed = 0; seed < 200; ++seed) {
      std::mt19937_64 rng(seed);
      const BlurKernel k = rasterize(center_trajectory(sampler.sample(rng)), side);
      REQUIRE(is_valid_kernel(k));
    }
}

TEST_CASE("trajectory splitting") {
  Trajectory t(167);
  for (int i = 0; i < 167; ++i) t[i] = {0.01 * i, std::sin(0.05 * i)};
  const auto parts = split_fragments(t, 8);
  REQUIRE(parts.size() == 8);
  int n21 = 0, n20 = 0, total = 0;
  size_t cursor = 0;
  for (const auto& p : parts) {
    n21 += p.size() == 21;
    n20 += p.size() == 20;
    total += static_cast<int>(p.size());
    for (const auto& q : p) {
      CHECK(q.x == t[cursor].x);
      ++cursor;
    }
  }
  CHECK(n21 == 7);
  CHECK(n20 == 1);
  CHECK(total == 167);

  const auto kernels = split_trajectory(t, 8);
  REQUIRE(kernels.size() == 8);
  for (const auto& k : kernels) {
    CHECK(k.rows() == 17);
    CHECK(is_valid_kernel(k));
  }
  const auto one = split_trajectory(t, 1, 17);
  CHECK(max_abs_diff(one[0], rasterize(center_trajectory(t), 17)) < 1e-15);
  CHECK_THROWS_AS(split_trajectory(t, 168), InvalidArgument);
}

TEST_CASE("efficient filter flow") {
  std::mt19937_64 rng(21);
  SUBCASE("axis windows form a partition of unity") {
    for (int regions : {1, 2, 4, 5}) {
      const auto w = eff_axis_windows(64, regions);
      for (int x = 0; x < 64; ++x) {
        double s = 0.0;
        for (const auto& row : w) {
          CHECK(row[x] >= 0.0);
          s += row[x];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
      }
    }
  }
  SUBCASE("shared kernel equals global convolution") {
    const Plane img = random_plane(64, 96, rng);
    const Plane k = random_kernel_plane(9, rng);
    const std::vector<BlurKernel> ks(8, k);
    CHECK(max_abs_diff(eff_blur(img, ks, 2, 4), fft_convolve(img, k, Boundary::reflect)) < 1e-8);
    CHECK(max_abs_diff(eff_blur(img, {k}, 1, 1), fft_convolve(img, k, Boundary::reflect)) < 1e-8);
  }
  SUBCASE("delta kernels are the identity") {
    const Plane img = random_plane(40, 30, rng);
    const std::vector<BlurKernel> ks(8, delta_kernel(17));
    CHECK(max_abs_diff(eff_blur(img, ks, 2, 4), img) < 1e-10);
  }
  SUBCASE("constant images and linearity with distinct kernels") {
    std::vector<BlurKernel> ks;
    for (int i = 0; i < 8; ++i) ks.push_back(random_kernel_plane(7, rng));
    CHECK(max_abs_diff(eff_blur(Plane(48, 64, 0.6), ks, 2, 4), Plane(48, 64, 0.6)) < 1e-10);
    const Plane a = random_plane(48, 64, rng), b = random_plane(48, 64, rng);
    Plane mix(48, 64);
    for (size_t i = 0; i < mix.size(); ++i) mix.values()[i] = 2.0 * a.values()[i] - b.values()[i];
    const Plane ea = eff_blur(a, ks, 2, 4), eb = eff_blur(b, ks, 2, 4), em = eff_blur(mix, ks, 2, 4);
    Plane want(48, 64);
    for (size_t i = 0; i < want.size(); ++i) want.values()[i] = 2.0 * ea.values()[i] - eb.values()[i];
    CHECK(max_abs_diff(em, want) < 1e-10);
  }
  CHECK_THROWS_AS(eff_blur(Plane(10, 10), std::vector<BlurKernel>(3, delta_kernel(3)), 2, 2),
                  InvalidArgument);
}

TEST_CASE("kernel files round trip") {
  const auto path = (std::filesystem::temp_directory_path() / "bdeblur_kernel.txt").string();
  std::mt19937_64 rng(5);
  const Plane k = random_kernel_plane(7, rng);
  write_kernel(path, k);
  const Plane back = read_kernel(path);
  CHECK(back == k);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_kernel(path), InvalidArgument);
}

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bdeblur/core.hpp"
#include "helpers.hpp"

using namespace bdeblur;
using namespace bdeblur::testing;

namespace {

Image rgb_pixel(double r, double g, double b) {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = r;
  img.at(0, 0, 1) = g;
  img.at(0, 0, 2) = b;
  return img;
}

// Independent closed form: sRGB decode, Y from the standard luminance row,
// CIE lightness.
double gray_lightness(double s) {
  const double lin = s <= 0.04045 ? s / 12.92 : std::pow((s + 0.055) / 1.055, 2.4);
  const double y = (0.2126 + 0.7152 + 0.0722) * lin;
  const double eps = 216.0 / 24389.0, kappa = 24389.0 / 27.0;
  return y > eps ? 116.0 * std::cbrt(y) - 16.0 : kappa * y;
}

}  // namespace

TEST_CASE("image shape invariants") {
  Image img(4, 5, 3);
  CHECK(img.size() == 4 * 5 * 3);
  CHECK_THROWS_AS(Image(2, 2, 2), InvalidArgument);
  CHECK_THROWS_AS(Image(-1, 2, 1), InvalidArgument);
  std::mt19937_64 rng(3);
  const Image rgb = random_image(6, 7, 3, rng);
  CHECK(Image::from_planes(rgb.planes()) == rgb);
}

TEST_CASE("lab reference points") {
  const Image black = rgb_to_lab(rgb_pixel(0, 0, 0));
  CHECK(black.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(black.at(0, 0, 1)) < 1e-9);
  CHECK(std::abs(black.at(0, 0, 2)) < 1e-9);

  const Image white = rgb_to_lab(rgb_pixel(1, 1, 1));
  CHECK(white.at(0, 0, 0) == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(std::abs(white.at(0, 0, 1)) < 1e-3);
  CHECK(std::abs(white.at(0, 0, 2)) < 1e-3);

  for (double s : {0.02, 0.5, 0.8}) {
    const Image g = rgb_to_lab(rgb_pixel(s, s, s));
    CHECK(g.at(0, 0, 0) == doctest::Approx(gray_lightness(s)).epsilon(1e-6));
    CHECK(std::abs(g.at(0, 0, 1)) < 1e-3);
    CHECK(std::abs(g.at(0, 0, 2)) < 1e-3);
  }
  CHECK_THROWS_AS(rgb_to_lab(Image(2, 2, 1)), InvalidArgument);
}

TEST_CASE("lab round trip on an in-gamut grid") {
  Image grid(1, 1000, 3);
  for (int i = 0; i < 1000; ++i) {
    grid.at(0, i, 0) = (i % 10) / 9.0;
    grid.at(0, i, 1) = ((i / 10) % 10) / 9.0;
    grid.at(0, i, 2) = (i / 100) / 9.0;
  }
  CHECK(max_abs_diff(lab_to_rgb(rgb_to_lab(grid)), grid) < 1e-6);
}

TEST_CASE("color transfer") {
  std::mt19937_64 rng(5);
  const Image colorful = random_image(8, 8, 3, rng);
  SUBCASE("self transfer is the identity") {
    CHECK(max_abs_diff(color_transfer_ab(colorful, colorful), colorful) < 1e-6);
  }
  SUBCASE("chroma comes from the chroma source, lightness from the luma source") {
    Image gray(8, 8, 3);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c) gray.at(y, x, c) = 0.3 + 0.05 * ((x + y) % 5);
    const Image out_lab = rgb_to_lab(color_transfer_ab(gray, colorful));
    const Image gray_lab = rgb_to_lab(gray), color_lab = rgb_to_lab(colorful);
    double dl = 0.0, dab = 0.0;
    for (size_t i = 0; i < out_lab.size(); i += 3) {
      dl = std::max(dl, std::abs(out_lab.values()[i] - gray_lab.values()[i]));
      for (int k = 1; k < 3; ++k)
        dab = std::max(dab, std::abs(out_lab.values()[i + k] - color_lab.values()[i + k]));
    }
    // Out-of-gamut combinations are not clamped, so the round trip holds.
    CHECK(dl < 1e-6);
    CHECK(dab < 1e-6);

    const Image merged = merge_lab(gray_lab, color_lab);
    for (size_t i = 0; i < merged.size(); i += 3) {
      CHECK(merged.values()[i] == gray_lab.values()[i]);
      CHECK(merged.values()[i + 1] == color_lab.values()[i + 1]);
      CHECK(merged.values()[i + 2] == color_lab.values()[i + 2]);
    }
  }
  SUBCASE("neutral chroma source removes color") {
    Image gray(8, 8, 3, 0.4);
    const Image out_lab = rgb_to_lab(color_transfer_ab(colorful, gray));
    for (size_t i = 0; i < out_lab.size(); i += 3) {
      CHECK(std::abs(out_lab.values()[i + 1]) < 1e-3);
      CHECK(std::abs(out_lab.values()[i + 2]) < 1e-3);
    }
  }
  SUBCASE("idempotent") {
    Image other = random_image(8, 8, 3, rng);
    const Image once = color_transfer_ab(other, colorful);
    CHECK(max_abs_diff(color_transfer_ab(once, colorful), once) < 1e-6);
  }
  CHECK_THROWS_AS(color_transfer_ab(colorful, Image(4, 4, 3)), InvalidArgument);
}

TEST_CASE("psnr") {
  Image a(4, 4, 1, 0.2);
  Image b = a;
  CHECK(psnr(a, b) == kPsnrCap);
  for (auto& v : b.values()) v += 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(b, a) == psnr(a, b));
  for (auto& v : b.values()) v += 0.4;
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-9));
  CHECK(psnr_from_mse(0.01) > psnr_from_mse(0.02));
  CHECK_THROWS_AS(psnr(a, Image(3, 4, 1)), InvalidArgument);
}

TEST_CASE("gradient energy") {
  CHECK(gradient_energy(Plane(9, 9, 0.7)) == 0.0);

  // Vertical step edge: one unit difference per row, so H / (H W) = 1 / W.
  for (int w : {8, 16, 32}) {
    Plane p(10, w);
    for (int r = 0; r < 10; ++r)
      for (int c = w / 2; c < w; ++c) p(r, c) = 1.0;
    CHECK(gradient_energy(p) == doctest::Approx(1.0 / w).epsilon(1e-12));
  }

  // The checkerboard is the maximum over all 4x4 binary images.
  double best = -1.0;
  unsigned best_mask = 0;
  for (unsigned mask = 0; mask < (1u << 16); ++mask) {
    Plane p(4, 4);
    for (int i = 0; i < 16; ++i) p.values()[i] = (mask >> i) & 1u;
    const double e = gradient_energy(p);
    if (e > best) {
      best = e;
      best_mask = mask;
    }
  }
  Plane checker(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) checker(r, c) = (r + c) % 2;
  CHECK(gradient_energy(checker) == doctest::Approx(best));
  CHECK((best_mask == 0x5A5Au || best_mask == 0xA5A5u));
}

TEST_CASE("netpbm round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "bdeblur_test_core";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(9);
  for (int channels : {1, 3}) {
    Image img(5, 7, channels);
    for (auto& v : img.values()) v = std::uniform_int_distribution<int>(0, 255)(rng) / 255.0;
    const auto path = (dir / (channels == 1 ? "a.pgm" : "a.ppm")).string();
    write_pnm(path, img);
    const Image back = read_pnm(path);
    CHECK(back.channels() == channels);
    CHECK(max_abs_diff(back, img) < 1e-12);
  }
  {
    std::ofstream bad(dir / "bad.pgm");
    bad << "P5\n4 4\n255\nxx";
  }
  CHECK_THROWS_AS(read_pnm((dir / "bad.pgm").string()), InvalidArgument);
  CHECK_THROWS_AS(read_pnm((dir / "missing.pgm").string()), InvalidArgument);
  std::filesystem::remove_all(dir);
}

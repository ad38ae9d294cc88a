#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "dtrack/errors.hpp"
#include "dtrack/features.hpp"
#include "dtrack/image.hpp"

using namespace dtrack;

namespace {

GrayImage random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(w * h);
  for (double& x : v) x = u(rng);
  return GrayImage(w, h, std::move(v));
}

// Horizontal ramp: value depends on the column only.
GrayImage ramp(std::size_t w, std::size_t h) {
  GrayImage img(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) img.at(x, y) = static_cast<double>(x) / (w - 1);
  }
  return img;
}

}  // namespace

TEST_CASE("image construction and validation") {
  CHECK_THROWS_AS(GrayImage(7, 8), ContractViolation);
  CHECK_THROWS_AS(GrayImage(8, 8, std::vector<double>(63)), ContractViolation);
  GrayImage img(8, 8, 0.5);
  CHECK_NOTHROW(img.validate());
  img.at(3, 3) = 1.5;
  CHECK_THROWS_AS(img.validate(), ContractViolation);
  img.at(3, 3) = NAN;
  CHECK_THROWS_AS(img.validate(), ContractViolation);
}

TEST_CASE("bilinear sampling hits pixel centers and replicates edges") {
  const GrayImage img = random_image(10, 9, 1);
  CHECK(img.sample(3.5, 4.5) == img.at(3, 4));
  CHECK(img.sample(-20.0, 4.5) == img.at(0, 4));
  CHECK(img.sample(100.0, 100.0) == img.at(9, 8));
  const double mid = img.sample(4.0, 4.5);
  CHECK(mid == doctest::Approx(0.5 * (img.at(3, 4) + img.at(4, 4))).epsilon(1e-15));
}

TEST_CASE("crop at unit scale preserves pixel values") {
  const GrayImage img = random_image(64, 48, 2);
  // side = 4 * sqrt(4 * 4) = 16 = out_size.
  const Crop c = crop_resize(img, 32.0, 24.0, 4.0, 4.0, 4.0, 16);
  CHECK(c.mapping.scale == 1.0);
  for (std::size_t v = 0; v < 16; ++v) {
    for (std::size_t u = 0; u < 16; ++u) {
      CHECK(std::abs(c.patch.at(u, v) - img.at(24 + u, 16 + v)) <= 1e-9);
    }
  }
}

TEST_CASE("crop mapping round-trips the crop corners exactly") {
  const GrayImage img = random_image(64, 48, 3);
  const Crop c = crop_resize(img, 20.25, 17.5, 8.0, 6.0, 5.0, 36);
  const double side = 5.0 * std::sqrt(48.0);
  CHECK(c.mapping.to_image_x(0.0) == 20.25 - 0.5 * side);
  CHECK(c.mapping.to_image_y(0.0) == 17.5 - 0.5 * side);
  CHECK(c.mapping.to_image_x(36.0) == doctest::Approx(20.25 + 0.5 * side).epsilon(1e-15));
  CHECK(c.mapping.to_image_y(36.0) == doctest::Approx(17.5 + 0.5 * side).epsilon(1e-15));
  CHECK(c.mapping.to_patch_x(c.mapping.to_image_x(7.25)) == doctest::Approx(7.25));
  const Box2D b(10, 12, 4, 6);
  const Box2D back = c.mapping.box_to_patch(c.mapping.box_to_image(b));
  CHECK(back.cx() == doctest::Approx(b.cx()).epsilon(1e-14));
  CHECK(back.w() == doctest::Approx(b.w()).epsilon(1e-14));
}

TEST_CASE("crop past the border replicates edge intensities") {
  const GrayImage img = ramp(32, 32);
  // Unit scale, crop centered on the left edge: its left half is outside.
  const Crop c = crop_resize(img, 0.0, 16.0, 4.0, 4.0, 4.0, 16);
  for (std::size_t v = 0; v < 16; ++v) {
    for (std::size_t u = 0; u < 8; ++u) CHECK(c.patch.at(u, v) == img.at(0, 0));
    CHECK(c.patch.at(8, v) == img.at(0, 0));
    CHECK(c.patch.at(9, v) == img.at(1, 0));
  }
}

TEST_CASE("crop contract errors") {
  const GrayImage img(16, 16, 0.5);
  CHECK_THROWS_AS(crop_resize(img, NAN, 4, 4, 4, 5, 16), ContractViolation);
  CHECK_THROWS_AS(crop_resize(img, 4, INFINITY, 4, 4, 5, 16), ContractViolation);
  CHECK_THROWS_AS(crop_resize(img, 4, 4, 0, 4, 5, 16), ContractViolation);
  CHECK_THROWS_AS(crop_resize(img, 4, 4, 4, 4, 1.0, 16), ContractViolation);
}

TEST_CASE("featurize shape and non-negativity") {
  const GrayImage img = random_image(24, 16, 4);
  const FeatureMap fm = featurize(img, 4, 8);
  CHECK(fm.channels == 10);
  CHECK(fm.height == 4);
  CHECK(fm.width == 6);
  CHECK(fm.stride == 4);
  CHECK(fm.cell_to_pixel(0.0) == 2.0);
  for (double v : fm.values) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  CHECK(featurize(img, 4, 8) == fm);
  CHECK_THROWS_AS(featurize(img, 5, 8), ContractViolation);
  CHECK_THROWS_AS(featurize(img, 0, 8), ContractViolation);
  CHECK_THROWS_AS(featurize(img, 4, 1), ContractViolation);
}

TEST_CASE("constant image: zero gradient channels, intensity equals the constant") {
  const FeatureMap fm = featurize(GrayImage(16, 16, 0.37), 4, 8);
  for (std::size_t i = 0; i < fm.height; ++i) {
    for (std::size_t j = 0; j < fm.width; ++j) {
      CHECK(fm.at(0, i, j) == doctest::Approx(0.37).epsilon(1e-15));
      for (std::size_t c = 1; c < fm.channels; ++c) CHECK(fm.at(c, i, j) == 0.0);
    }
  }
}

TEST_CASE("vertical step edge: energy in the horizontal-gradient bin at the edge") {
  // 8 x 8 patch, left half 0, right half 1, stride 4: columns 3 and 4 see a
  // central difference of 0.5 with orientation 0 (bin 0); each 4x4 cell holds
  // four such pixels, so the cell mean is 4 * 0.5 / 16 = 0.125.
  GrayImage img(8, 8, 0.0);
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 4; x < 8; ++x) img.at(x, y) = 1.0;
  }
  const FeatureMap fm = featurize(img, 4, 8);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(fm.at(1, i, j) == doctest::Approx(0.125).epsilon(1e-15));
      CHECK(fm.at(2, i, j) == doctest::Approx(0.125).epsilon(1e-15));
      for (std::size_t c = 3; c < fm.channels; ++c) CHECK(fm.at(c, i, j) == 0.0);
    }
  }
  CHECK(fm.at(0, 0, 0) == 0.0);
  CHECK(fm.at(0, 0, 1) == 1.0);
}

TEST_CASE("horizontal step edge lands in the vertical-gradient bin") {
  GrayImage img(8, 8, 0.0);
  for (std::size_t y = 4; y < 8; ++y) {
    for (std::size_t x = 0; x < 8; ++x) img.at(x, y) = 1.0;
  }
  const FeatureMap fm = featurize(img, 4, 8);
  // Orientation pi/2 is the center of bin 4 of 8.
  CHECK(fm.at(2 + 4, 0, 0) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(fm.at(2 + 0, 0, 0) == 0.0);
}

TEST_CASE("translation by one stride shifts the map by one cell") {
  const GrayImage img = random_image(96, 96, 5);
  const Crop a = crop_resize(img, 48.0, 48.0, 8.0, 8.0, 4.0, 32);
  const Crop b = crop_resize(img, 52.0, 48.0, 8.0, 8.0, 4.0, 32);
  REQUIRE(a.mapping.scale == 1.0);
  const FeatureMap fa = featurize(a.patch, 4, 8), fb = featurize(b.patch, 4, 8);
  for (std::size_t c = 0; c < fa.channels; ++c) {
    for (std::size_t i = 1; i + 1 < fa.height; ++i) {
      for (std::size_t j = 1; j + 2 < fa.width; ++j) {
        CHECK(std::abs(fb.at(c, i, j) - fa.at(c, i, j + 1)) <= 1e-9);
      }
    }
  }
}

TEST_CASE("adding a constant changes only the intensity channel") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  std::vector<double> v(32 * 32);
  for (double& x : v) x = u(rng);
  const GrayImage img(32, 32, v);
  for (double& x : v) x += 0.25;
  const GrayImage shifted(32, 32, v);
  const FeatureMap fa = featurize(img, 4, 8), fb = featurize(shifted, 4, 8);
  const std::size_t n = fa.cells();
  for (std::size_t p = 0; p < n; ++p) {
    CHECK(fb.values[p] == doctest::Approx(fa.values[p] + 0.25).epsilon(1e-14));
  }
  for (std::size_t e = n; e < fa.values.size(); ++e) {
    CHECK(std::abs(fb.values[e] - fa.values[e]) <= 1e-12);
  }
}

TEST_CASE("pixel-major layout") {
  const FeatureMap fm = featurize(random_image(16, 8, 7), 4, 2);
  const std::vector<double> pm = fm.pixel_major();
  for (std::size_t c = 0; c < fm.channels; ++c) {
    for (std::size_t i = 0; i < fm.height; ++i) {
      for (std::size_t j = 0; j < fm.width; ++j) {
        CHECK(pm[(i * fm.width + j) * fm.channels + c] == fm.at(c, i, j));
      }
    }
  }
}

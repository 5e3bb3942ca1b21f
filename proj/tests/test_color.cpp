/*
 * Copyright 2026 The crowdvis Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <fstream>

#include "crowdvis/color.hpp"
#include "crowdvis/error.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "natural.hpp"

using namespace crowdvis;
using namespace crowdvis::color;
using crowdvis::testing::natural_images;
using crowdvis::testing::natural_tiles;
using crowdvis::testing::random_image;
using crowdvis::testing::scene_image;
using crowdvis::testing::solid;

namespace {

ImageBuffer halves(Rgb left, Rgb right, int w = 10, int h = 6) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Rgb c = x < w / 2 ? left : right;
      img.set_rgb(x, y, c.r, c.g, c.b);
    }
  return img;
}

ImageBuffer gray_from(const FloatPlane& p) {
  ImageBuffer img(p.width(), p.height(), 3);
  for (int y = 0; y < p.height(); ++y)
    for (int x = 0; x < p.width(); ++x) {
      const auto v = static_cast<std::uint8_t>(std::lround(255.0 * p.at(x, y)));
      img.set_rgb(x, y, v, v, v);
    }
  return img;
}

ImageBuffer blurred(const ImageBuffer& img, double sigma) { return gray_from(gaussian_blur(to_grayscale(img), sigma)); }

}  // namespace

TEST_CASE("brightness") {
  CHECK(brightness(solid(5, 5, 255, 255, 255)) == 1.0);
  CHECK(brightness(solid(5, 5, 0, 0, 0)) == 0.0);
  CHECK(brightness(halves({255, 255, 255}, {0, 0, 0})) == doctest::Approx(0.5));
}

TEST_CASE("saturation") {
  CHECK(saturation(solid(4, 4, 77, 77, 77)) == 0.0);
  CHECK(saturation(gray_from(to_grayscale(random_image(9, 9, 1)))) == 0.0);
  CHECK(saturation(solid(4, 4, 255, 0, 0)) == 1.0);
  CHECK(saturation(solid(4, 4, 128, 64, 64)) == doctest::Approx(0.5));
}

TEST_CASE("colorfulness") {
  CHECK(colorfulness(solid(6, 6, 200, 30, 90)) == 0.0);
  CHECK(colorfulness(gray_from(to_grayscale(random_image(12, 12, 2)))) == 0.0);
  // rg = {255, -255}: sigma 255; yb = {127.5, 127.5}: sigma 0.
  ImageBuffer two(2, 1, 3);
  two.set_rgb(0, 0, 255, 0, 0);
  two.set_rgb(1, 0, 0, 255, 0);
  CHECK(colorfulness(two) == doctest::Approx(0.5));
}

TEST_CASE("colorfulness vanishes exactly when opponent channels are constant") {
  // Gray pixels (R = G, B = (R+G)/2) give rg = yb = 0.
  CHECK(colorfulness(gray_from(to_grayscale(scene_image(20, 20, 4)))) == 0.0);
  // Constant nonzero opponents also give zero spread.
  ImageBuffer shifted(8, 8, 3);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const auto v = static_cast<std::uint8_t>(10 * x + y);
      shifted.set_rgb(x, y, static_cast<std::uint8_t>(v + 40), v, v);  // rg = 40, yb = 20
    }
  CHECK(colorfulness(shifted) == doctest::Approx(0.0).epsilon(1e-12));
  // Any variation in rg or yb is detected.
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto img = solid(6, 6, 100, 100, 100);
    img.at(static_cast<int>(s % 6), static_cast<int>(s / 6 % 6), static_cast<int>(s % 3)) = 101;
    CHECK(colorfulness(img) > 0.0);
  }
}

TEST_CASE("contrast") {
  CHECK(contrast(solid(7, 3, 40, 80, 120)) == 0.0);
  CHECK(contrast(halves({255, 255, 255}, {0, 0, 0})) == doctest::Approx(0.5));
  const auto img = random_image(31, 17, 3);
  CHECK(contrast(rotate90(img)) == doctest::Approx(contrast(img)).epsilon(1e-12));
}

TEST_CASE("warm hue") {
  CHECK(warm_hue(solid(4, 4, 0, 0, 255)) == 0.0);
  CHECK(warm_hue(solid(4, 4, 255, 0, 0)) == 1.0);
  CHECK(warm_hue(halves({255, 0, 0}, {0, 0, 255})) == doctest::Approx(0.5));
  CHECK(warm_hue(solid(4, 4, 200, 200, 200)) == 0.0);
  CHECK(warm_hue(solid(4, 4, 255, 0, 255)) == 0.0);  // magenta, 300 degrees
  CHECK(warm_hue(solid(4, 4, 255, 255, 0)) == 1.0);  // yellow, 60 degrees
}

TEST_CASE("clarity") {
  CHECK(clarity(solid(4, 4, 255, 255, 255)) == 1.0);
  CHECK(clarity(solid(4, 4, 0, 0, 0)) == 0.0);
  CHECK(clarity_from_value(FloatPlane(3, 3, 0.7)) == 1.0);
  CHECK(clarity_from_value(FloatPlane(3, 3, std::nextafter(0.7, 0.0))) == 0.0);
  CHECK(clarity(solid(2, 2, 179, 0, 0)) == 1.0);
  CHECK(clarity(solid(2, 2, 178, 0, 0)) == 0.0);
}

TEST_CASE("blur metric") {
  CHECK(blur_metric(solid(9, 9, 50, 60, 70)) == 0.0);

  // Laplacian of the centered impulse is {0,1,0,1,-4,1,0,1,0}: mean 0, variance 20/9.
  auto impulse = solid(3, 3, 0, 0, 0);
  impulse.set_rgb(1, 1, 255, 255, 255);
  CHECK(blur_metric(impulse) == doctest::Approx(20.0 / 9.0).epsilon(1e-12));

  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto img = random_image(24, 24, 100 + s);
    CHECK(blur_metric(blurred(img, 2.0)) < blur_metric(img));
  }
}

TEST_CASE("blur metric decreases along a blur sequence on every fixture") {
  std::vector<ImageBuffer> corpus;
  for (const auto& img : natural_images()) corpus.push_back(resize_bilinear(img, 128));
  for (std::uint64_t s = 0; s < 5; ++s) corpus.push_back(scene_image(64, 48, s));
  for (const auto& img : corpus) {
    const auto gray = to_grayscale(img);
    double prev = laplacian_variance(gray);
    for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
      const double v = laplacian_variance(gaussian_blur(gray, sigma));
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("per-pixel statistics are rotation and mirror invariant") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto img = scene_image(40, 27, s);
    const auto base = extract(img, nullptr);
    for (const auto& t : {rotate90(img), rotate90(rotate90(img)), rotate90(rotate90(rotate90(img))),
                          mirror_horizontal(img)}) {
      const auto f = extract(t, nullptr);
      CHECK(f.brightness == doctest::Approx(base.brightness).epsilon(1e-12));
      CHECK(f.saturation == doctest::Approx(base.saturation).epsilon(1e-12));
      CHECK(f.colorfulness == doctest::Approx(base.colorfulness).epsilon(1e-12));
      CHECK(f.contrast == doctest::Approx(base.contrast).epsilon(1e-12));
      CHECK(f.warm_hue == doctest::Approx(base.warm_hue).epsilon(1e-12));
      CHECK(f.clarity == doctest::Approx(base.clarity).epsilon(1e-12));
    }
  }
}

TEST_CASE("bounded outputs on random images") {
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const int w = 1 + static_cast<int>(s % 7), h = 1 + static_cast<int>(s / 7 % 5);
    const auto img = s % 2 ? random_image(w, h, s) : solid(w, h, s % 256, s * 7 % 256, s * 13 % 256);
    const auto f = extract(img, nullptr);
    for (double v : {f.brightness, f.saturation, f.colorfulness, f.contrast, f.warm_hue, f.clarity}) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
    REQUIRE(f.blur_metric >= 0.0);
  }
}

TEST_CASE("quality features") {
  static_assert(kQualityFeatureCount == 36);
  CHECK_FALSE(quality_features(solid(31, 64, 1, 2, 3)).has_value());
  CHECK(quality_features(solid(32, 32, 1, 2, 3)).has_value());

  for (double v : crowdvis::testing::owned(mscn_coefficients(to_grayscale(solid(40, 40, 90, 90, 90))))) {
    CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
  }
  const auto flat = quality_features(solid(40, 40, 90, 90, 90));
  REQUIRE(flat.has_value());
  for (double v : *flat) CHECK(std::isfinite(v));
}

TEST_CASE("quality features are mirror invariant with diagonal blocks exchanged") {
  // Mirroring maps the main-diagonal neighbour onto the anti-diagonal one.
  auto swap_diagonals = [](QualityFeatures f) {
    for (int scale = 0; scale < 2; ++scale)
      for (int k = 0; k < 4; ++k) std::swap(f[scale * 18 + 10 + k], f[scale * 18 + 14 + k]);
    return f;
  };
  for (const auto& tile : natural_tiles()) {
    const auto a = quality_features(tile);
    const auto b = quality_features(mirror_horizontal(tile));
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    const auto bs = swap_diagonals(*b);
    for (std::size_t i = 0; i < kQualityFeatureCount; ++i) CHECK(std::abs((*a)[i] - bs[i]) < 1e-6);
  }
}

TEST_CASE("noise moves the first-scale product shape") {
  std::uint64_t seed = 1;
  for (const auto& tile : natural_tiles()) {
    const auto clean = quality_features(tile);
    const auto noisy = quality_features(add_gaussian_noise(tile, 25.0, seed++));
    CHECK(std::abs((*clean)[2] - (*noisy)[2]) > 0.05);
  }
}

TEST_CASE("quality model scoring") {
  QualityFeatures zero{};
  CHECK(QualityModel(3.25, std::vector<double>(36, 0.0)).score(zero) == 3.25);
  const QualityModel flat(-1.5, std::vector<double>(36, 0.0));
  CHECK(flat.score(*quality_features(random_image(40, 40, 1))) == flat.score(*quality_features(solid(40, 40, 0, 0, 0))));
  CHECK_THROWS_AS(QualityModel(0.0, std::vector<double>(35, 0.0)), ConfigError);
}

TEST_CASE("quality model file errors name the path") {
  const std::string missing = "/nonexistent/dir/quality.txt";
  try {
    QualityModel::load(missing);
    FAIL("expected config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(missing) != std::string::npos);
  }
  const auto tmp = std::filesystem::temp_directory_path() / "crowdvis_bad_quality.txt";
  for (const char* body : {"", "36\nabc\n", "35\n0.0\n", "36\n1.0\n0.5\n"}) {
    std::ofstream(tmp) << body;
    try {
      QualityModel::load(tmp);
      FAIL("expected config error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(tmp.string()) != std::string::npos);
    }
  }
  const QualityModel m(0.5, std::vector<double>(36, 0.25), std::vector<double>(36, 1.0), std::vector<double>(36, 2.0));
  m.save(tmp);
  const auto back = QualityModel::load(tmp);
  const auto f = *quality_features(random_image(33, 33, 5));
  CHECK(back.score(f) == m.score(f));
  std::filesystem::remove(tmp);
}

TEST_CASE("bundled quality model ranks pristine above noisy") {
  const auto model = QualityModel::load(crowdvis::testing::data_path("models/quality_linear.txt"));
  std::uint64_t seed = 40;
  for (const auto& img : natural_images()) {
    const auto small = resize_bilinear(img, 256);
    const double clean = model.score(*quality_features(small));
    const double noisy = model.score(*quality_features(add_gaussian_noise(small, 25.0, seed++)));
    CHECK(clean > noisy);
  }
}

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
#include <random>

#include "crowdvis/error.hpp"
#include "crowdvis/imaging.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace crowdvis;
using crowdvis::testing::random_image;
using crowdvis::testing::random_plane;
using crowdvis::testing::solid;

TEST_CASE("grayscale luma") {
  for (double v : crowdvis::testing::owned(to_grayscale(solid(4, 3, 255, 255, 255)))) CHECK(v == doctest::Approx(1.0));
  for (double v : crowdvis::testing::owned(to_grayscale(solid(4, 3, 0, 0, 0)))) CHECK(v == 0.0);
  for (double v : crowdvis::testing::owned(to_grayscale(solid(4, 3, 255, 0, 0)))) CHECK(v == doctest::Approx(0.299).epsilon(1e-12));
  ImageBuffer gray(3, 2, 1, std::uint8_t{51});
  for (double v : crowdvis::testing::owned(to_grayscale(gray))) CHECK(v == doctest::Approx(0.2));
}

TEST_CASE("hsv conversion") {
  auto red = rgb_to_hsv(solid(2, 2, 255, 0, 0));
  CHECK(red.hue.at(0, 0) == 0.0);
  CHECK(red.saturation.at(0, 0) == 1.0);
  CHECK(red.value.at(0, 0) == 1.0);

  auto gray = rgb_to_hsv(solid(2, 2, 128, 128, 128));
  CHECK(gray.saturation.at(1, 1) == 0.0);
  CHECK(gray.hue.at(1, 1) == 0.0);
  CHECK(gray.value.at(1, 1) == doctest::Approx(128.0 / 255.0));

  // S = 1 - 64/128.
  auto dull = rgb_to_hsv(solid(2, 2, 128, 64, 64));
  CHECK(dull.hue.at(0, 1) == 0.0);
  CHECK(dull.saturation.at(0, 1) == doctest::Approx(0.5));
  CHECK(dull.value.at(0, 1) == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("hsv round trip within one level") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const auto r = static_cast<std::uint8_t>(rng() & 0xFF), g = static_cast<std::uint8_t>(rng() & 0xFF),
               b = static_cast<std::uint8_t>(rng() & 0xFF);
    const auto hsv = rgb_to_hsv(solid(1, 1, r, g, b));
    CHECK(hsv.hue.at(0, 0) >= 0.0);
    CHECK(hsv.hue.at(0, 0) < 360.0);
    const Rgb back = hsv_to_rgb(hsv.hue.at(0, 0), hsv.saturation.at(0, 0), hsv.value.at(0, 0));
    CHECK(std::abs(back.r - r) <= 1);
    CHECK(std::abs(back.g - g) <= 1);
    CHECK(std::abs(back.b - b) <= 1);
  }
}

TEST_CASE("convolution basics") {
  const auto p = random_plane(9, 7, 1);
  CHECK(convolve2d(p, Kernel::identity3()) == p);

  const FloatPlane flat(6, 5, 0.37);
  for (double v : crowdvis::testing::owned(convolve2d(flat, Kernel::laplacian4()))) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));

  FloatPlane impulse(3, 3, 0.0);
  impulse.at(1, 1) = 1.0;
  // Replicate padding: corners see only zeros, edge midpoints see the center once.
  const std::vector<double> expected = {0, 1, 0, 1, -4, 1, 0, 1, 0};
  const auto out = convolve2d(impulse, Kernel::laplacian4());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(out.data()[i] == expected[i]);

  CHECK_THROWS_AS(convolve2d(p, Kernel{2, 2, {1, 1, 1, 1}}), InvalidArgument);
  CHECK_THROWS_AS(convolve2d(p, Kernel{3, 2, {1, 1, 1, 1, 1, 1}}), InvalidArgument);
}

TEST_CASE("convolution is linear") {
  const auto p = random_plane(16, 16, 11), q = random_plane(16, 16, 12);
  const Kernel k{3, 5, {0.1, -0.3, 0.7, 0.2, -0.5, 1.1, 0.4, -0.9, 0.3, 0.6, -0.2, 0.8, 0.05, -0.6, 0.25}};
  const double a = 1.7, b = -0.4;
  FloatPlane mix(16, 16);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = a * p.data()[i] + b * q.data()[i];
  const auto lhs = convolve2d(mix, k), cp = convolve2d(p, k), cq = convolve2d(q, k);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    CHECK(std::abs(lhs.data()[i] - (a * cp.data()[i] + b * cq.data()[i])) < 1e-9);
  }
}

TEST_CASE("integral image") {
  CHECK(integral_image(FloatPlane(4, 4, 1.0)).at(3, 3) == 16.0);
  for (double v : crowdvis::testing::owned(integral_image(FloatPlane(5, 3, 0.0)))) CHECK(v == 0.0);

  std::mt19937_64 rng(3);
  FloatPlane p(8, 8);
  for (auto& v : p.data()) v = static_cast<double>(rng() % 100);
  const auto t = integral_image(p);
  for (int y0 = 0; y0 < 8; ++y0)
    for (int x0 = 0; x0 < 8; ++x0)
      for (int y1 = y0; y1 < 8; ++y1)
        for (int x1 = x0; x1 < 8; ++x1) {
          double direct = 0.0;
          for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) direct += p.at(x, y);
          REQUIRE(rect_sum(t, x0, y0, x1, y1) == direct);
        }
}

TEST_CASE("gaussian blur") {
  const FloatPlane flat(20, 10, 0.42);
  for (double v : crowdvis::testing::owned(gaussian_blur(flat, 1.5))) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));

  FloatPlane blob(64, 64, 0.0);
  for (int y = 28; y < 36; ++y)
    for (int x = 28; x < 36; ++x) blob.at(x, y) = 0.9;
  double before = 0.0, after = 0.0;
  for (double v : blob.data()) before += v;
  for (double v : crowdvis::testing::owned(gaussian_blur(blob, 2.0))) after += v;
  CHECK(std::abs(before - after) < 1e-6);

  FloatPlane impulse(21, 21, 0.0);
  impulse.at(10, 10) = 1.0;
  const auto g = gaussian_kernel_1d(1.0);
  REQUIRE(g.size() == 7);  // radius ceil(3 sigma)
  const auto out = gaussian_blur(impulse, 1.0);
  for (int dy = -3; dy <= 3; ++dy)
    for (int dx = -3; dx <= 3; ++dx) CHECK(out.at(10 + dx, 10 + dy) == doctest::Approx(g[dx + 3] * g[dy + 3]));
  CHECK(out.at(6, 10) == 0.0);

  CHECK_THROWS_AS(gaussian_blur(flat, 0.0), InvalidArgument);
  CHECK_THROWS_AS(gaussian_blur(flat, -1.0), InvalidArgument);
}

TEST_CASE("canny edges") {
  CHECK(canny_edges(FloatPlane(32, 32, 0.5), 0.1, 0.2).count() == 0);

  const int w = 40, h = 30, step = 17;
  FloatPlane s(w, h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = step; x < w; ++x) s.at(x, y) = 1.0;
  const auto e = canny_edges(s, 0.1, 0.2);
  // Sobel magnitude peaks equally on columns step-1 and step; suppression keeps the dark side.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) CHECK(e.at(x, y) == (x == step - 1));

  const auto img = random_image(48, 48, 5);
  const auto gray = gaussian_blur(to_grayscale(img), 1.0);
  std::size_t prev = canny_edges(gray, 0.05, 0.1).count();
  for (double high = 0.15; high <= 1.0; high += 0.05) {
    const std::size_t n = canny_edges(gray, 0.05, high).count();
    CHECK(n <= prev);
    prev = n;
  }

  CHECK_THROWS_AS(canny_edges(s, 0.3, 0.2), InvalidArgument);
  CHECK_THROWS_AS(canny_edges(s, 0.0, 0.2), InvalidArgument);
  CHECK_THROWS_AS(canny_edges(s, 0.1, 1.5), InvalidArgument);
}

TEST_CASE("bilinear resize") {
  const auto r = resize_bilinear(random_image(100, 50, 1), 50);
  CHECK(r.width() == 50);
  CHECK(r.height() == 25);
  const auto small = random_image(30, 20, 2);
  CHECK(resize_bilinear(small, 64) == small);
  const auto c = resize_bilinear(solid(200, 120, 10, 200, 30), 100);
  CHECK(c.width() == 100);
  CHECK(c.height() == 60);
  CHECK(c == solid(100, 60, 10, 200, 30));
  CHECK_THROWS_AS(resize_bilinear(small, 8), InvalidArgument);
}

TEST_CASE("geometric transforms") {
  const auto img = random_image(7, 4, 9);
  const auto r = rotate90(img);
  CHECK(r.width() == 4);
  CHECK(r.height() == 7);
  CHECK(rotate90(rotate90(rotate90(r))) == img);
  CHECK(mirror_horizontal(mirror_horizontal(img)) == img);
  CHECK(mirror_vertical(img).at(2, 0, 1) == img.at(2, 3, 1));
  const auto c = crop(img, 2, 1, 3, 2);
  CHECK(c.at(0, 0, 2) == img.at(2, 1, 2));
}

TEST_CASE("outputs finite") {
  const auto img = random_image(33, 21, 4);
  const auto g = to_grayscale(img);
  for (const auto& plane : {g, gaussian_blur(g, 0.7), convolve2d(g, Kernel::laplacian4()), sobel(g).magnitude,
                            integral_image(g)}) {
    for (double v : plane.data()) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(FloatPlane(1, 1, std::vector<double>{std::nan("")}), InvalidArgument);
  CHECK_THROWS_AS(ImageBuffer(0, 3, 3), InvalidArgument);
  CHECK_THROWS_AS(ImageBuffer(2, 2, 3, std::vector<std::uint8_t>(5)), InvalidArgument);
}

TEST_CASE("parallel kernels match serial reference exactly") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto img = random_image(37 + 5 * static_cast<int>(seed), 29, seed);
    CHECK(to_grayscale(img) == reference::to_grayscale(img));
    const auto a = rgb_to_hsv(img), b = reference::rgb_to_hsv(img);
    CHECK(a.hue == b.hue);
    CHECK(a.saturation == b.saturation);
    CHECK(a.value == b.value);
    const auto g = to_grayscale(img);
    CHECK(convolve2d(g, Kernel::laplacian4()) == reference::convolve2d(g, Kernel::laplacian4()));
    CHECK(gaussian_blur(g, 1.3) == reference::gaussian_blur(g, 1.3));
    CHECK(resize_to(img, 23, 17) == reference::resize_to(img, 23, 17));
    CHECK(resize_to(img, 80, 61) == reference::resize_to(img, 80, 61));
  }
}

TEST_CASE("codec round trip and typed errors") {
  const auto img = random_image(13, 9, 21);
  const auto bytes = encode_png(img);
  CHECK(decode_image_bytes(bytes, "mem") == img);

  const auto tmp = std::filesystem::temp_directory_path() / "crowdvis_codec_test.png";
  write_png(img, tmp);
  CHECK(decode_image(tmp) == img);
  std::filesystem::remove(tmp);

  const auto bad = std::filesystem::temp_directory_path() / "crowdvis_bad.jpg";
  {
    std::ofstream f(bad, std::ios::binary);
    f << "\xFF\xD8\xFF garbage";
  }
  try {
    decode_image(bad);
    FAIL("expected decode error");
  } catch (const DecodeError& e) {
    CHECK(e.path() == bad.string());
  }
  std::filesystem::remove(bad);
  CHECK_THROWS_AS(decode_image("/nonexistent/crowdvis.png"), DecodeError);

  const auto astro = decode_image(crowdvis::testing::data_path("fixtures/astronaut.png"));
  CHECK(astro.width() == 512);
  CHECK(astro.height() == 512);
  CHECK(astro.channels() == 3);
}
